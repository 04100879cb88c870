#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sft/dependence.hpp"
#include "sft/ir.hpp"

namespace sft {

struct CriticalityWeights {
  double condition = 4.0;
  double fanout = 1.0;
  double loop = 2.0;
  double threshold = 4.0;
};

struct VariableScore {
  uint8_t var = 0;
  uint32_t conditions = 0;  // branches whose condition depends on the var
  uint32_t fanout = 0;      // variables the var feeds
  uint32_t loop_depth = 0;  // deepest loop holding one of its defs
  double score = 0.0;
};

enum class BlockReason : uint8_t {
  ConditionalTerminator,
  DefinesCriticalVariable,
};

const char* block_reason_text(BlockReason r);

struct CriticalBlockEntry {
  uint32_t block = 0;
  std::vector<BlockReason> reasons;
};

struct CriticalityReport {
  CriticalityWeights weights;
  std::vector<VariableScore> scores;  // indexed by variable
  // per Br instruction: variables its condition transitively depends on
  std::vector<std::pair<uint32_t, std::vector<uint8_t>>> branch_cond_vars;
  // instruction indices that define each variable
  std::vector<std::vector<uint32_t>> var_def_sites;
};

CriticalityReport score_variables(const Program& p, const Cfg& cfg,
                                  const CriticalityWeights& w = {});

// Variables scoring at or above the threshold, optionally capped to the
// top_k best (ties broken by declaration order).
std::vector<uint8_t> select_critical_variables(const CriticalityReport& report,
                                               std::optional<uint32_t> top_k = std::nullopt);

std::vector<CriticalBlockEntry> select_critical_blocks(const Cfg& cfg,
                                                       const CriticalityReport& report,
                                                       const std::vector<uint8_t>& critical_vars,
                                                       bool protect_defs = false);

std::string report_json(const CriticalityReport& report, const Program& p,
                        const std::vector<uint8_t>& critical_vars,
                        const std::vector<CriticalBlockEntry>& blocks);

}  // namespace sft
