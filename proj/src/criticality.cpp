#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"
#include "sft/criticality.hpp"

namespace sft {

const char* block_reason_text(BlockReason r) {
  switch (r) {
    case BlockReason::ConditionalTerminator: return "conditional-terminator";
    case BlockReason::DefinesCriticalVariable: return "defines-critical-variable";
  }
  return "?";
}

CriticalityReport score_variables(const Program& p, const Cfg& cfg, const CriticalityWeights& w) {
  for (double x : {w.condition, w.fanout, w.loop, w.threshold}) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error("criticality weights must be finite and non-negative");
    }
  }
  CriticalityReport report;
  report.weights = w;
  DependenceGraph g = analyze(p, cfg);
  LoopInfo loops = loop_depths(p, cfg);

  uint32_t var_count = static_cast<uint32_t>(p.variables.size());
  report.var_def_sites.assign(var_count, {});
  for (uint32_t i = 0; i < p.instructions.size(); ++i) {
    if (auto d = defined_variable(p.instructions[i])) report.var_def_sites[*d].push_back(i);
  }

  std::vector<uint32_t> conditions(var_count, 0);
  for (const auto& [br_index, roots] : g.branch_roots) {
    std::vector<uint8_t> cond_vars = initial_influencers(g, roots);
    for (uint8_t v : cond_vars) ++conditions[v];
    report.branch_cond_vars.push_back({br_index, std::move(cond_vars)});
  }

  report.scores.resize(var_count);
  for (uint32_t v = 0; v < var_count; ++v) {
    VariableScore& s = report.scores[v];
    s.var = static_cast<uint8_t>(v);
    s.conditions = conditions[v];
    s.fanout = static_cast<uint32_t>(forward_fanout(g, p, p.variables[v].name).size());
    s.loop_depth = loops.var_max_def_depth[v];
    s.score = w.condition * s.conditions + w.fanout * s.fanout + w.loop * s.loop_depth;
  }
  return report;
}

std::vector<uint8_t> select_critical_variables(const CriticalityReport& report,
                                               std::optional<uint32_t> top_k) {
  std::vector<uint8_t> picked;
  for (const VariableScore& s : report.scores) {
    if (s.score >= report.weights.threshold) picked.push_back(s.var);
  }
  if (top_k && picked.size() > *top_k) {
    std::stable_sort(picked.begin(), picked.end(), [&](uint8_t a, uint8_t b) {
      return report.scores[a].score > report.scores[b].score;
    });
    picked.resize(*top_k);
    std::sort(picked.begin(), picked.end());
  }
  return picked;
}

std::vector<CriticalBlockEntry> select_critical_blocks(const Cfg& cfg,
                                                       const CriticalityReport& report,
                                                       const std::vector<uint8_t>& critical_vars,
                                                       bool protect_defs) {
  std::set<uint8_t> critical(critical_vars.begin(), critical_vars.end());
  std::map<uint32_t, std::set<BlockReason>> found;
  for (const auto& [br_index, cond_vars] : report.branch_cond_vars) {
    bool hit = std::any_of(cond_vars.begin(), cond_vars.end(),
                           [&](uint8_t v) { return critical.count(v) > 0; });
    if (hit) found[cfg.block_of(br_index)].insert(BlockReason::ConditionalTerminator);
  }
  if (protect_defs) {
    for (uint8_t v : critical_vars) {
      for (uint32_t site : report.var_def_sites[v]) {
        found[cfg.block_of(site)].insert(BlockReason::DefinesCriticalVariable);
      }
    }
  }
  std::vector<CriticalBlockEntry> entries;
  for (const auto& [block, reasons] : found) {
    entries.push_back({block, {reasons.begin(), reasons.end()}});
  }
  return entries;
}

std::string report_json(const CriticalityReport& report, const Program& p,
                        const std::vector<uint8_t>& critical_vars,
                        const std::vector<CriticalBlockEntry>& blocks) {
  nlohmann::json j;
  j["weights"] = {{"condition", report.weights.condition},
                  {"fanout", report.weights.fanout},
                  {"loop", report.weights.loop},
                  {"threshold", report.weights.threshold}};
  j["variables"] = nlohmann::json::array();
  for (const VariableScore& s : report.scores) {
    j["variables"].push_back({{"name", p.variables[s.var].name},
                              {"conditions", s.conditions},
                              {"fanout", s.fanout},
                              {"loop_depth", s.loop_depth},
                              {"score", s.score}});
  }
  j["critical_variables"] = nlohmann::json::array();
  for (uint8_t v : critical_vars) j["critical_variables"].push_back(p.variables[v].name);
  j["critical_blocks"] = nlohmann::json::array();
  for (const CriticalBlockEntry& e : blocks) {
    nlohmann::json reasons = nlohmann::json::array();
    for (BlockReason r : e.reasons) reasons.push_back(block_reason_text(r));
    j["critical_blocks"].push_back({{"block", e.block}, {"reasons", reasons}});
  }
  return j.dump(2);
}

}  // namespace sft
