#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sft/criticality.hpp"
#include "sft/fault.hpp"
#include "sft/hardener.hpp"
#include "sft/vm.hpp"

namespace sft {

enum class Outcome : uint8_t {
  Benign = 0,
  Sdc,
  DetectedRecovered,
  DetectedNotRecovered,
  Crash,
  Hang,
};
inline constexpr uint8_t kOutcomeCount = 6;

const char* outcome_text(Outcome o);

Outcome classify(const RunResult& run, const std::vector<int32_t>& golden_tape);

struct CampaignRow {
  HardenMode mode = HardenMode::None;
  FaultSpec fault;
  Outcome outcome = Outcome::Benign;
  uint32_t detections = 0;
  uint32_t recoveries = 0;
  uint64_t dyn_instr = 0;
  bool tape_equal = false;
};

struct CampaignConfig {
  std::vector<HardenMode> modes = {HardenMode::None, HardenMode::Critical, HardenMode::Full};
  uint64_t step_limit = kDefaultStepLimit;
  uint32_t jobs = 1;
  CriticalityWeights weights;
};

struct CampaignResult {
  std::vector<CampaignRow> rows;  // mode-major, fault order preserved
  std::vector<int32_t> golden_tape;
  uint64_t golden_dyn = 0;
};

// Fault-free reference run of the unprotected program; throws unless it halts.
RunResult golden_run(const Program& p, uint64_t step_limit = kDefaultStepLimit);

// One trial per (mode, fault). Manifests are derived from the program with
// the config's weights; a stored manifest, when given, is reused for the one
// mode it matches instead of being rederived. Row order is mode-major and
// independent of the parallelism degree.
CampaignResult run_campaign(const Program& p, const std::vector<FaultSpec>& faults,
                            const CampaignConfig& config, const Manifest* stored = nullptr);

std::string campaign_csv(const CampaignResult& r);
std::string campaign_summary_json(const CampaignResult& r, const CampaignConfig& config);

struct OverheadRow {
  HardenMode mode = HardenMode::None;
  uint64_t dyn_instr = 0;
  uint64_t shadow_bytes = 0;
  uint32_t protected_blocks = 0;
};

std::vector<OverheadRow> overhead_report(const Program& p, const CampaignConfig& config);
std::string overhead_csv(const std::vector<OverheadRow>& rows);

}  // namespace sft
