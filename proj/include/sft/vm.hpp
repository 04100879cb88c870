#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sft/fault.hpp"
#include "sft/hardener.hpp"
#include "sft/ir.hpp"

namespace sft {

enum class RunStatus : uint8_t { Halted = 0, Trapped, StepLimit };

enum class TrapKind : uint8_t { None = 0, InvalidOpcode, DivZero, OobTarget };

const char* run_status_text(RunStatus s);
const char* trap_kind_text(TrapKind k);

struct TrapInfo {
  TrapKind kind = TrapKind::None;
  uint32_t pc = 0;

  bool operator==(const TrapInfo&) const = default;
};

struct Detection {
  uint32_t block = 0;      // protected block whose twin runs disagreed
  uint64_t dyn_index = 0;  // dynamic instruction count when detected
};

struct RunResult {
  RunStatus status = RunStatus::Halted;
  TrapInfo trap;
  std::vector<int32_t> output;
  std::vector<int32_t> final_store;
  uint64_t dyn_instr = 0;
  std::vector<Detection> detections;
  uint32_t recoveries = 0;
  uint64_t shadow_bytes = 0;
  std::optional<FaultSpec> fault_applied;
  BinaryImage final_working_image;  // post-run working copy, for diagnostics
};

inline constexpr uint64_t kDefaultStepLimit = 1u << 20;

// Extra memory the protection machinery keeps alongside the program: the
// backup image plus the rollback snapshot of the variable store. Zero when
// nothing is protected.
uint64_t shadow_bytes(const HardenedProgram& h);

// Called once per executed instruction: dynamic index, pc, opcode, and the
// (at most one) store write the instruction made.
using TraceFn =
    std::function<void(uint64_t, uint32_t, Opcode, const std::optional<std::pair<uint8_t, int32_t>>&)>;

RunResult run(const HardenedProgram& h, uint64_t step_limit = kDefaultStepLimit,
              std::optional<FaultSpec> fault = std::nullopt, const TraceFn& trace = {});

}  // namespace sft
