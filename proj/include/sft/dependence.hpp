#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/ir.hpp"

namespace sft {

// A definition point: either instruction `site` writing `var`, or the
// variable's initial value when site is -1.
struct DefNode {
  uint8_t var = 0;
  int32_t site = -1;

  bool operator==(const DefNode&) const = default;
  bool operator<(const DefNode& o) const {
    if (var != o.var) return var < o.var;
    return site < o.site;
  }
};

struct DependenceGraph {
  std::vector<DefNode> nodes;
  // adjacency by node index, sorted and deduplicated; an edge u -> v means
  // node v consumes node u (data) or executes under u's branch (control)
  std::vector<std::vector<uint32_t>> data_edges;
  std::vector<std::vector<uint32_t>> control_edges;

  // def nodes whose value can still be live when a halt is reached
  std::vector<uint32_t> end_reaching;
  // for every Br instruction, the def nodes its condition reads
  std::vector<std::pair<uint32_t, std::vector<uint32_t>>> branch_roots;
  // node indices grouped by variable
  std::vector<std::vector<uint32_t>> var_nodes;

  uint32_t node_of(const DefNode& d) const;
};

DependenceGraph analyze(const Program& p, const Cfg& cfg);

// Both queries speak about initial values at program end. backward_slice(v)
// lists the variables whose initial values can influence the value v holds
// when the program halts; forward_fanout(u) lists the variables whose final
// values any definition of u can influence. The two are dual: for a variable
// u that is never reassigned, u in slice(v) iff v in fanout(u).
std::vector<uint8_t> backward_slice(const DependenceGraph& g, const Program& p, const std::string& name);
std::vector<uint8_t> forward_fanout(const DependenceGraph& g, const Program& p, const std::string& name);

// Variables whose initial values can flow into any of the given def nodes;
// with a branch's condition roots this is the condition's slice.
std::vector<uint8_t> initial_influencers(const DependenceGraph& g, const std::vector<uint32_t>& roots);

struct LoopInfo {
  std::vector<uint32_t> block_depth;        // loop nesting depth per block
  std::vector<uint32_t> var_max_def_depth;  // deepest loop any def of the var sits in
};

LoopInfo loop_depths(const Program& p, const Cfg& cfg);

std::string to_dot(const DependenceGraph& g, const Program& p);

}  // namespace sft
