#include <algorithm>
#include <array>
#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sft/campaign.hpp"

namespace sft {

const char* outcome_text(Outcome o) {
  switch (o) {
    case Outcome::Benign: return "benign";
    case Outcome::Sdc: return "sdc";
    case Outcome::DetectedRecovered: return "detected-recovered";
    case Outcome::DetectedNotRecovered: return "detected-not-recovered";
    case Outcome::Crash: return "crash";
    case Outcome::Hang: return "hang";
  }
  return "?";
}

// Status decides first, then detections, then tape equality.
Outcome classify(const RunResult& run, const std::vector<int32_t>& golden_tape) {
  if (run.status == RunStatus::Trapped) return Outcome::Crash;
  if (run.status == RunStatus::StepLimit) return Outcome::Hang;
  bool tape_equal = run.output == golden_tape;
  if (!run.detections.empty()) {
    return tape_equal ? Outcome::DetectedRecovered : Outcome::DetectedNotRecovered;
  }
  return tape_equal ? Outcome::Benign : Outcome::Sdc;
}

RunResult golden_run(const Program& p, uint64_t step_limit) {
  HardenedProgram h = harden(p, build_cfg(p), HardenMode::None);
  RunResult r = run(h, step_limit);
  if (r.status != RunStatus::Halted) {
    throw Error(std::string("golden run did not halt (") + run_status_text(r.status) + ")");
  }
  return r;
}

namespace {

HardenedProgram harden_for_mode(const Program& p, const Cfg& cfg, HardenMode mode,
                                const CriticalityWeights& weights, const Manifest* stored) {
  if (stored && stored->mode == mode) {
    HardenedProgram h = harden(p, cfg, HardenMode::None);
    h.manifest = *stored;
    return h;
  }
  if (mode != HardenMode::Critical) return harden(p, cfg, mode);
  CriticalityReport report = score_variables(p, cfg, weights);
  std::vector<uint8_t> vars = select_critical_variables(report);
  std::vector<uint32_t> blocks;
  for (const CriticalBlockEntry& e : select_critical_blocks(cfg, report, vars)) {
    blocks.push_back(e.block);
  }
  return harden(p, cfg, HardenMode::Critical, blocks, vars);
}

}  // namespace

CampaignResult run_campaign(const Program& p, const std::vector<FaultSpec>& faults,
                            const CampaignConfig& config, const Manifest* stored) {
  Cfg cfg = build_cfg(p);
  RunResult golden = golden_run(p, config.step_limit);

  std::vector<HardenedProgram> hardened;
  hardened.reserve(config.modes.size());
  for (HardenMode mode : config.modes) {
    hardened.push_back(harden_for_mode(p, cfg, mode, config.weights, stored));
  }

  CampaignResult result;
  result.golden_tape = golden.output;
  result.golden_dyn = golden.dyn_instr;
  size_t total = config.modes.size() * faults.size();
  result.rows.resize(total);

  auto trial = [&](size_t i) {
    size_t mode_index = i / faults.size();
    const FaultSpec& fault = faults[i % faults.size()];
    RunResult r = run(hardened[mode_index], config.step_limit, fault);
    CampaignRow& row = result.rows[i];
    row.mode = config.modes[mode_index];
    row.fault = fault;
    row.outcome = classify(r, result.golden_tape);
    row.detections = static_cast<uint32_t>(r.detections.size());
    row.recoveries = r.recoveries;
    row.dyn_instr = r.dyn_instr;
    row.tape_equal = r.output == result.golden_tape;
  };

  uint32_t jobs = std::max(1u, config.jobs);
  if (jobs == 1 || total <= 1) {
    for (size_t i = 0; i < total; ++i) trial(i);
    return result;
  }

  std::atomic<size_t> cursor{0};
  std::mutex error_lock;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      size_t i = cursor.fetch_add(1);
      if (i >= total) return;
      try {
        trial(i);
      } catch (...) {
        std::lock_guard<std::mutex> guard(error_lock);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (uint32_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return result;
}

std::string campaign_csv(const CampaignResult& r) {
  std::ostringstream out;
  out << "mode,segment,byte,bit,trigger,outcome,detections,recoveries,dyn_instr,tape_equal\n";
  for (const CampaignRow& row : r.rows) {
    out << harden_mode_text(row.mode) << ',' << fault_segment_text(row.fault.segment) << ','
        << row.fault.byte_index << ',' << static_cast<unsigned>(row.fault.bit_index) << ','
        << row.fault.trigger << ',' << outcome_text(row.outcome) << ',' << row.detections << ','
        << row.recoveries << ',' << row.dyn_instr << ',' << (row.tape_equal ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string campaign_summary_json(const CampaignResult& r, const CampaignConfig& config) {
  nlohmann::json j;
  j["trials"] = r.rows.size();
  j["golden"] = {{"tape_length", r.golden_tape.size()}, {"dyn_instr", r.golden_dyn}};
  j["step_limit"] = config.step_limit;
  j["weights"] = {{"condition", config.weights.condition},
                  {"fanout", config.weights.fanout},
                  {"loop", config.weights.loop},
                  {"threshold", config.weights.threshold}};

  nlohmann::json per_mode = nlohmann::json::object();
  for (HardenMode mode : config.modes) {
    std::array<uint64_t, kOutcomeCount> counts{};
    uint64_t mode_trials = 0;
    for (const CampaignRow& row : r.rows) {
      if (row.mode != mode) continue;
      ++mode_trials;
      ++counts[static_cast<size_t>(row.outcome)];
    }
    nlohmann::json counts_json = nlohmann::json::object();
    nlohmann::json fractions = nlohmann::json::object();
    for (uint8_t o = 0; o < kOutcomeCount; ++o) {
      const char* name = outcome_text(static_cast<Outcome>(o));
      counts_json[name] = counts[o];
      fractions[name] = mode_trials ? static_cast<double>(counts[o]) / mode_trials : 0.0;
    }
    // coverage over the faults that mattered: benign trials are excluded
    // from the denominator so harmless flips cannot inflate the figure
    uint64_t non_benign = mode_trials - counts[static_cast<size_t>(Outcome::Benign)];
    double coverage =
        non_benign == 0
            ? 1.0
            : static_cast<double>(counts[static_cast<size_t>(Outcome::DetectedRecovered)]) /
                  non_benign;
    per_mode[harden_mode_text(mode)] = {{"trials", mode_trials},
                                        {"counts", counts_json},
                                        {"fractions", fractions},
                                        {"coverage_non_benign", coverage}};
  }
  j["modes"] = per_mode;
  return j.dump(2);
}

std::vector<OverheadRow> overhead_report(const Program& p, const CampaignConfig& config) {
  std::vector<OverheadRow> rows;
  Cfg cfg = build_cfg(p);
  for (HardenMode mode : {HardenMode::None, HardenMode::Critical, HardenMode::Full}) {
    HardenedProgram h = harden_for_mode(p, cfg, mode, config.weights, nullptr);
    RunResult r = run(h, config.step_limit);
    if (r.status != RunStatus::Halted) {
      throw Error(std::string("fault-free run did not halt (") + run_status_text(r.status) + ")");
    }
    rows.push_back({mode, r.dyn_instr, r.shadow_bytes,
                    static_cast<uint32_t>(h.manifest.protected_blocks.size())});
  }
  return rows;
}

std::string overhead_csv(const std::vector<OverheadRow>& rows) {
  std::ostringstream out;
  out << "mode,dyn_instr,shadow_bytes,protected_blocks\n";
  for (const OverheadRow& row : rows) {
    out << harden_mode_text(row.mode) << ',' << row.dyn_instr << ',' << row.shadow_bytes << ','
        << row.protected_blocks << '\n';
  }
  return out.str();
}

}  // namespace sft
