#include <algorithm>
#include <cstring>
#include <sstream>
#include <vector>

#include "sft/dependence.hpp"

namespace sft {
namespace {

struct DynBits {
  std::vector<uint64_t> words;

  explicit DynBits(size_t bits = 0) : words((bits + 63) / 64, 0) {}
  void set(uint32_t i) { words[i / 64] |= uint64_t(1) << (i % 64); }
  void reset(uint32_t i) { words[i / 64] &= ~(uint64_t(1) << (i % 64)); }
  bool test(uint32_t i) const { return (words[i / 64] >> (i % 64)) & 1; }
  bool or_with(const DynBits& o) {
    bool changed = false;
    for (size_t w = 0; w < words.size(); ++w) {
      uint64_t next = words[w] | o.words[w];
      changed |= next != words[w];
      words[w] = next;
    }
    return changed;
  }
  bool operator==(const DynBits&) const = default;
};

}  // namespace

uint32_t DependenceGraph::node_of(const DefNode& d) const {
  for (uint32_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] == d) return i;
  }
  throw Error("no def node for variable " + std::to_string(d.var) + " at site " +
              std::to_string(d.site));
}

namespace {

// post-dominance over blocks plus one virtual exit fed by every halt block;
// pdom[b] includes b itself
std::vector<DynBits> post_dominators(const Program& p, const Cfg& cfg) {
  uint32_t n = static_cast<uint32_t>(cfg.blocks.size());
  uint32_t exit_id = n;
  std::vector<std::vector<uint32_t>> succ(n + 1);
  for (const BasicBlock& b : cfg.blocks) {
    succ[b.id] = cfg.successors[b.id];
    if (p.instructions[b.end - 1].opcode == Opcode::Halt) succ[b.id].push_back(exit_id);
  }

  std::vector<DynBits> pdom(n + 1, DynBits(n + 1));
  for (uint32_t b = 0; b <= n; ++b) {
    for (uint32_t i = 0; i <= n; ++i) pdom[b].set(i);
  }
  pdom[exit_id] = DynBits(n + 1);
  pdom[exit_id].set(exit_id);

  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b = 0; b < n; ++b) {
      DynBits next(n + 1);
      if (succ[b].empty()) continue;
      next = pdom[succ[b][0]];
      for (size_t s = 1; s < succ[b].size(); ++s) {
        for (size_t w = 0; w < next.words.size(); ++w) next.words[w] &= pdom[succ[b][s]].words[w];
      }
      next.set(b);
      if (!(next == pdom[b])) {
        pdom[b] = next;
        changed = true;
      }
    }
  }
  return pdom;
}

}  // namespace

DependenceGraph analyze(const Program& p, const Cfg& cfg) {
  DependenceGraph g;
  uint32_t var_count = static_cast<uint32_t>(p.variables.size());
  uint32_t n = static_cast<uint32_t>(p.instructions.size());

  for (uint8_t v = 0; v < var_count; ++v) g.nodes.push_back({v, -1});
  std::vector<uint32_t> site_node(n, UINT32_MAX);
  for (uint32_t i = 0; i < n; ++i) {
    if (auto d = defined_variable(p.instructions[i])) {
      site_node[i] = static_cast<uint32_t>(g.nodes.size());
      g.nodes.push_back({*d, static_cast<int32_t>(i)});
    }
  }
  uint32_t node_count = static_cast<uint32_t>(g.nodes.size());
  g.var_nodes.assign(var_count, {});
  for (uint32_t nd = 0; nd < node_count; ++nd) g.var_nodes[g.nodes[nd].var].push_back(nd);
  g.data_edges.assign(node_count, {});
  g.control_edges.assign(node_count, {});
  if (n == 0) return g;

  uint32_t blocks = static_cast<uint32_t>(cfg.blocks.size());
  std::vector<std::vector<uint32_t>> preds(blocks);
  for (uint32_t b = 0; b < blocks; ++b) {
    for (uint32_t s : cfg.successors[b]) preds[s].push_back(b);
  }

  // reaching definitions to block entry, initial values seeded at the entry
  std::vector<DynBits> gen(blocks, DynBits(node_count));
  std::vector<DynBits> kill(blocks, DynBits(node_count));
  for (const BasicBlock& b : cfg.blocks) {
    for (uint32_t i = b.begin; i < b.end; ++i) {
      if (site_node[i] == UINT32_MAX) continue;
      uint8_t var = g.nodes[site_node[i]].var;
      for (uint32_t nd : g.var_nodes[var]) {
        kill[b.id].set(nd);
        gen[b.id].reset(nd);
      }
      gen[b.id].set(site_node[i]);
    }
  }
  std::vector<DynBits> in(blocks, DynBits(node_count));
  std::vector<DynBits> out(blocks, DynBits(node_count));
  for (uint8_t v = 0; v < var_count; ++v) in[cfg.entry].set(v);
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b = 0; b < blocks; ++b) {
      for (uint32_t pr : preds[b]) changed |= in[b].or_with(out[pr]);
      DynBits next = in[b];
      for (size_t w = 0; w < next.words.size(); ++w) {
        next.words[w] = (next.words[w] & ~kill[b].words[w]) | gen[b].words[w];
      }
      if (!(next == out[b])) {
        out[b] = std::move(next);
        changed = true;
      }
    }
  }

  // per-instruction sweep: data edges, condition roots, halt-reaching defs
  DynBits end_live(node_count);
  for (const BasicBlock& b : cfg.blocks) {
    DynBits live = in[b.id];
    for (uint32_t i = b.begin; i < b.end; ++i) {
      const Instruction& ins = p.instructions[i];
      std::vector<uint32_t> sources;
      for (uint8_t use : used_variables(ins)) {
        for (uint32_t nd : g.var_nodes[use]) {
          if (live.test(nd)) sources.push_back(nd);
        }
      }
      if (ins.opcode == Opcode::Br) {
        std::sort(sources.begin(), sources.end());
        g.branch_roots.push_back({i, sources});
      } else if (site_node[i] != UINT32_MAX) {
        for (uint32_t src : sources) g.data_edges[src].push_back(site_node[i]);
        uint8_t var = g.nodes[site_node[i]].var;
        for (uint32_t nd : g.var_nodes[var]) live.reset(nd);
        live.set(site_node[i]);
      } else if (ins.opcode == Opcode::Halt) {
        end_live.or_with(live);
      }
    }
  }
  for (uint32_t nd = 0; nd < node_count; ++nd) {
    if (end_live.test(nd)) g.end_reaching.push_back(nd);
  }

  // control edges: a branch's condition sources feed every def in a block
  // whose execution that branch decides
  std::vector<DynBits> pdom = post_dominators(p, cfg);
  for (const auto& [br_index, roots] : g.branch_roots) {
    uint32_t m = cfg.block_of(br_index);
    const std::vector<uint32_t>& succ = cfg.successors[m];
    if (succ.size() < 2) continue;
    DynBits any(blocks + 1), all(blocks + 1);
    all = pdom[succ[0]];
    any = pdom[succ[0]];
    for (size_t s = 1; s < succ.size(); ++s) {
      for (size_t w = 0; w < all.words.size(); ++w) {
        any.words[w] |= pdom[succ[s]].words[w];
        all.words[w] &= pdom[succ[s]].words[w];
      }
    }
    for (uint32_t b = 0; b < blocks; ++b) {
      if (!any.test(b) || all.test(b)) continue;
      for (uint32_t i = cfg.blocks[b].begin; i < cfg.blocks[b].end; ++i) {
        if (site_node[i] == UINT32_MAX) continue;
        for (uint32_t root : roots) g.control_edges[root].push_back(site_node[i]);
      }
    }
  }

  for (auto& adj : g.data_edges) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  for (auto& adj : g.control_edges) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return g;
}

namespace {

std::vector<bool> forward_closure(const DependenceGraph& g, const std::vector<uint32_t>& roots) {
  std::vector<bool> seen(g.nodes.size(), false);
  std::vector<uint32_t> stack;
  for (uint32_t r : roots) {
    if (!seen[r]) {
      seen[r] = true;
      stack.push_back(r);
    }
  }
  while (!stack.empty()) {
    uint32_t nd = stack.back();
    stack.pop_back();
    for (const auto* adj : {&g.data_edges[nd], &g.control_edges[nd]}) {
      for (uint32_t next : *adj) {
        if (!seen[next]) {
          seen[next] = true;
          stack.push_back(next);
        }
      }
    }
  }
  return seen;
}

std::vector<bool> backward_closure(const DependenceGraph& g, const std::vector<uint32_t>& roots) {
  std::vector<std::vector<uint32_t>> rev(g.nodes.size());
  for (uint32_t u = 0; u < g.nodes.size(); ++u) {
    for (uint32_t v : g.data_edges[u]) rev[v].push_back(u);
    for (uint32_t v : g.control_edges[u]) rev[v].push_back(u);
  }
  std::vector<bool> seen(g.nodes.size(), false);
  std::vector<uint32_t> stack;
  for (uint32_t r : roots) {
    if (!seen[r]) {
      seen[r] = true;
      stack.push_back(r);
    }
  }
  while (!stack.empty()) {
    uint32_t nd = stack.back();
    stack.pop_back();
    for (uint32_t next : rev[nd]) {
      if (!seen[next]) {
        seen[next] = true;
        stack.push_back(next);
      }
    }
  }
  return seen;
}

uint8_t require_var(const Program& p, const std::string& name) {
  if (auto v = find_variable(p, name)) return *v;
  throw Error("unknown variable '" + name + "'");
}

}  // namespace

std::vector<uint8_t> initial_influencers(const DependenceGraph& g,
                                         const std::vector<uint32_t>& roots) {
  std::vector<bool> seen = backward_closure(g, roots);
  std::vector<uint8_t> vars;
  for (uint32_t nd = 0; nd < g.nodes.size(); ++nd) {
    if (seen[nd] && g.nodes[nd].site < 0) vars.push_back(g.nodes[nd].var);
  }
  return vars;
}

std::vector<uint8_t> backward_slice(const DependenceGraph& g, const Program& p,
                                    const std::string& name) {
  uint8_t v = require_var(p, name);
  std::vector<uint32_t> roots;
  for (uint32_t nd : g.end_reaching) {
    if (g.nodes[nd].var == v) roots.push_back(nd);
  }
  return initial_influencers(g, roots);
}

std::vector<uint8_t> forward_fanout(const DependenceGraph& g, const Program& p,
                                    const std::string& name) {
  uint8_t v = require_var(p, name);
  std::vector<bool> seen = forward_closure(g, g.var_nodes[v]);
  std::vector<uint8_t> vars;
  for (uint32_t nd : g.end_reaching) {
    if (seen[nd]) vars.push_back(g.nodes[nd].var);
  }
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

LoopInfo loop_depths(const Program& p, const Cfg& cfg) {
  LoopInfo info;
  uint32_t blocks = static_cast<uint32_t>(cfg.blocks.size());
  info.block_depth.assign(blocks, 0);
  info.var_max_def_depth.assign(p.variables.size(), 0);
  if (blocks == 0) return info;

  std::vector<bool> reachable(blocks, false);
  std::vector<uint32_t> stack = {cfg.entry};
  reachable[cfg.entry] = true;
  while (!stack.empty()) {
    uint32_t b = stack.back();
    stack.pop_back();
    for (uint32_t s : cfg.successors[b]) {
      if (!reachable[s]) {
        reachable[s] = true;
        stack.push_back(s);
      }
    }
  }

  std::vector<std::vector<uint32_t>> preds(blocks);
  for (uint32_t b = 0; b < blocks; ++b) {
    if (!reachable[b]) continue;
    for (uint32_t s : cfg.successors[b]) preds[s].push_back(b);
  }

  std::vector<DynBits> dom(blocks, DynBits(blocks));
  for (uint32_t b = 0; b < blocks; ++b) {
    if (b == cfg.entry) {
      dom[b].set(b);
    } else {
      for (uint32_t i = 0; i < blocks; ++i) dom[b].set(i);
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b = 0; b < blocks; ++b) {
      if (!reachable[b] || b == cfg.entry) continue;
      DynBits next(blocks);
      bool first = true;
      for (uint32_t pr : preds[b]) {
        if (first) {
          next = dom[pr];
          first = false;
        } else {
          for (size_t w = 0; w < next.words.size(); ++w) next.words[w] &= dom[pr].words[w];
        }
      }
      next.set(b);
      if (!(next == dom[b])) {
        dom[b] = std::move(next);
        changed = true;
      }
    }
  }

  // natural loops from back edges, bodies merged when they share a header
  std::vector<std::vector<uint32_t>> loop_bodies;  // indexed by header usage below
  std::vector<DynBits> body_sets;
  std::vector<uint32_t> headers;
  for (uint32_t t = 0; t < blocks; ++t) {
    if (!reachable[t]) continue;
    for (uint32_t h : cfg.successors[t]) {
      if (!dom[t].test(h)) continue;
      size_t loop = headers.size();
      for (size_t k = 0; k < headers.size(); ++k) {
        if (headers[k] == h) loop = k;
      }
      if (loop == headers.size()) {
        headers.push_back(h);
        body_sets.emplace_back(blocks);
        body_sets.back().set(h);
      }
      DynBits& body = body_sets[loop];
      std::vector<uint32_t> work;
      if (!body.test(t)) {
        body.set(t);
        work.push_back(t);
      }
      while (!work.empty()) {
        uint32_t b = work.back();
        work.pop_back();
        for (uint32_t pr : preds[b]) {
          if (!body.test(pr)) {
            body.set(pr);
            work.push_back(pr);
          }
        }
      }
    }
  }
  for (uint32_t b = 0; b < blocks; ++b) {
    uint32_t depth = 0;
    for (const DynBits& body : body_sets) depth += body.test(b) ? 1 : 0;
    info.block_depth[b] = depth;
  }
  for (uint32_t i = 0; i < p.instructions.size(); ++i) {
    if (auto d = defined_variable(p.instructions[i])) {
      uint32_t depth = info.block_depth[cfg.block_of(i)];
      info.var_max_def_depth[*d] = std::max(info.var_max_def_depth[*d], depth);
    }
  }
  return info;
}

std::string to_dot(const DependenceGraph& g, const Program& p) {
  std::ostringstream out;
  out << "digraph deps {\n";
  for (uint32_t nd = 0; nd < g.nodes.size(); ++nd) {
    const DefNode& d = g.nodes[nd];
    out << "  n" << nd << " [label=\"" << p.variables[d.var].name << "@";
    if (d.site < 0) {
      out << "init";
    } else {
      out << d.site;
    }
    out << "\"];\n";
  }
  for (uint32_t u = 0; u < g.nodes.size(); ++u) {
    for (uint32_t v : g.data_edges[u]) out << "  n" << u << " -> n" << v << ";\n";
    for (uint32_t v : g.control_edges[u]) {
      out << "  n" << u << " -> n" << v << " [style=dashed];\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace sft
