#include <cstring>

#include "sft/vm.hpp"

namespace sft {

const char* run_status_text(RunStatus s) {
  switch (s) {
    case RunStatus::Halted: return "halted";
    case RunStatus::Trapped: return "trapped";
    case RunStatus::StepLimit: return "step-limit";
  }
  return "?";
}

const char* trap_kind_text(TrapKind k) {
  switch (k) {
    case TrapKind::None: return "none";
    case TrapKind::InvalidOpcode: return "invalid-opcode";
    case TrapKind::DivZero: return "div-zero";
    case TrapKind::OobTarget: return "oob-target";
  }
  return "?";
}

uint64_t shadow_bytes(const HardenedProgram& h) {
  if (h.manifest.protected_blocks.empty()) return 0;
  return h.backup.bytes.size() + 4u * h.backup.var_count();
}

namespace {

constexpr uint64_t kHaltExit = ~uint64_t(0);  // unreachable by any 32-bit jump

struct Fetched {
  bool ok = false;
  Instruction ins;
  TrapInfo trap;
};

// Strict fetch: any record a clean encoder would not have produced traps.
// Nonzero unused fields or a bad comparison code read as invalid-opcode;
// out-of-range pc or variable indices read as oob-target. Control targets
// are not checked here; a wild jump traps at its own fetch.
Fetched fetch(const std::vector<uint8_t>& image, size_t code_off, uint32_t var_count,
              uint32_t instr_count, uint64_t pc) {
  Fetched f;
  if (pc >= instr_count) {
    f.trap = {TrapKind::OobTarget, static_cast<uint32_t>(pc)};
    return f;
  }
  const uint8_t* rec = image.data() + code_off + size_t(kInstrRecordSize) * pc;
  if (rec[0] >= kOpcodeCount) {
    f.trap = {TrapKind::InvalidOpcode, pc};
    return f;
  }
  Instruction ins;
  ins.opcode = static_cast<Opcode>(rec[0]);
  ins.dst = rec[1];
  ins.a = rec[2];
  ins.b = rec[3];
  uint32_t imm = static_cast<uint32_t>(rec[4]) | (static_cast<uint32_t>(rec[5]) << 8) |
                 (static_cast<uint32_t>(rec[6]) << 16) | (static_cast<uint32_t>(rec[7]) << 24);
  ins.imm = static_cast<int32_t>(imm);

  auto invalid = [&] {
    f.trap = {TrapKind::InvalidOpcode, pc};
    return f;
  };
  auto oob = [&] {
    f.trap = {TrapKind::OobTarget, pc};
    return f;
  };
  switch (ins.opcode) {
    case Opcode::Halt:
      if (ins.dst || ins.a || ins.b || ins.imm) return invalid();
      break;
    case Opcode::Const:
      if (ins.a || ins.b) return invalid();
      if (ins.dst >= var_count) return oob();
      break;
    case Opcode::Mov:
      if (ins.b || ins.imm) return invalid();
      if (ins.dst >= var_count || ins.a >= var_count) return oob();
      break;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::Div:
      if (ins.imm) return invalid();
      if (ins.dst >= var_count || ins.a >= var_count || ins.b >= var_count) return oob();
      break;
    case Opcode::Out:
      if (ins.dst || ins.b || ins.imm) return invalid();
      if (ins.a >= var_count) return oob();
      break;
    case Opcode::Jmp:
      if (ins.dst || ins.a || ins.b) return invalid();
      break;
    case Opcode::Br:
      if (ins.dst >= kRelopCount) return invalid();
      if (ins.a >= var_count || ins.b >= var_count) return oob();
      break;
  }
  f.ok = true;
  f.ins = ins;
  return f;
}

bool compare(int32_t a, Relop r, int32_t b) {
  switch (r) {
    case Relop::Eq: return a == b;
    case Relop::Ne: return a != b;
    case Relop::Lt: return a < b;
    case Relop::Ge: return a >= b;
    case Relop::Gt: return a > b;
    case Relop::Le: return a <= b;
  }
  return false;
}

struct StepEffect {
  std::optional<std::pair<uint8_t, int32_t>> write;
  std::optional<int32_t> out;
  uint64_t next_pc = 0;
};

// Executes one fetched instruction against a store. Returns false on a
// runtime trap (division by zero); arithmetic wraps modulo 2^32 and
// division truncates toward zero.
bool exec_one(const Instruction& ins, uint64_t pc, std::vector<int32_t>& store, StepEffect& e,
              TrapInfo& trap) {
  auto wrap = [](uint64_t v) { return static_cast<int32_t>(static_cast<uint32_t>(v)); };
  switch (ins.opcode) {
    case Opcode::Halt:
      e.next_pc = kHaltExit;
      return true;
    case Opcode::Const:
      e.write = {ins.dst, ins.imm};
      break;
    case Opcode::Mov:
      e.write = {ins.dst, store[ins.a]};
      break;
    case Opcode::Add:
      e.write = {ins.dst, wrap(static_cast<uint32_t>(store[ins.a]) +
                               static_cast<uint64_t>(static_cast<uint32_t>(store[ins.b])))};
      break;
    case Opcode::Sub:
      e.write = {ins.dst, wrap(static_cast<uint32_t>(store[ins.a]) -
                               static_cast<uint64_t>(static_cast<uint32_t>(store[ins.b])))};
      break;
    case Opcode::Mul:
      e.write = {ins.dst, wrap(static_cast<uint64_t>(static_cast<uint32_t>(store[ins.a])) *
                               static_cast<uint32_t>(store[ins.b]))};
      break;
    case Opcode::Div: {
      if (store[ins.b] == 0) {
        trap = {TrapKind::DivZero, static_cast<uint32_t>(pc)};
        return false;
      }
      int64_t q = static_cast<int64_t>(store[ins.a]) / store[ins.b];
      e.write = {ins.dst, wrap(static_cast<uint64_t>(q))};
      break;
    }
    case Opcode::Out:
      e.out = store[ins.a];
      break;
    case Opcode::Jmp:
      e.next_pc = static_cast<uint32_t>(ins.imm);
      return true;
    case Opcode::Br: {
      bool taken = compare(store[ins.a], static_cast<Relop>(ins.dst), store[ins.b]);
      e.next_pc = taken ? ins.then_target() : ins.else_target();
      return true;
    }
  }
  if (e.write) store[e.write->first] = e.write->second;
  e.next_pc = pc + 1;
  return true;
}

struct LegResult {
  enum class End { Left, Trapped, StepLimit } end = End::Left;
  uint64_t exit_pc = 0;
  TrapInfo trap;
  std::vector<std::pair<uint8_t, int32_t>> writes;
  std::vector<int32_t> outs;
};

class Engine {
 public:
  Engine(const HardenedProgram& h, uint64_t step_limit, std::optional<FaultSpec> fault,
         const TraceFn& trace)
      : h_(h),
        step_limit_(step_limit),
        fault_(fault),
        trace_(trace),
        working_(h.working.bytes),
        backup_(h.backup.bytes) {
    var_count_ = h.working.var_count();
    instr_count_ = h.working.instr_count();
    code_off_ = h.working.code_offset();
    store_.resize(var_count_);
    for (uint32_t v = 0; v < var_count_; ++v) {
      size_t off = kHeaderSize + 4u * v;
      uint32_t raw = static_cast<uint32_t>(working_[off]) |
                     (static_cast<uint32_t>(working_[off + 1]) << 8) |
                     (static_cast<uint32_t>(working_[off + 2]) << 16) |
                     (static_cast<uint32_t>(working_[off + 3]) << 24);
      store_[v] = static_cast<int32_t>(raw);
    }
    prot_index_.assign(instr_count_, -1);
    for (size_t r = 0; r < h.manifest.protected_blocks.size(); ++r) {
      const ProtectedRange& range = h.manifest.protected_blocks[r];
      if (range.end > instr_count_) throw Error("protected range outside code bounds");
      for (uint32_t i = range.begin; i < range.end; ++i) {
        prot_index_[i] = static_cast<int32_t>(r);
      }
    }
  }

  RunResult run_all() {
    while (true) {
      if (pc_ == kHaltExit) {
        res_.status = RunStatus::Halted;
        break;
      }
      int32_t prot = pc_ < instr_count_ ? prot_index_[pc_] : -1;
      if (prot < 0) {
        if (!committed_step()) break;
      } else {
        if (!protected_block(h_.manifest.protected_blocks[prot])) break;
      }
    }
    res_.final_store = store_;
    res_.final_working_image.bytes = std::move(working_);
    res_.shadow_bytes = shadow_bytes(h_);
    return std::move(res_);
  }

 private:
  const HardenedProgram& h_;
  uint64_t step_limit_;
  std::optional<FaultSpec> fault_;
  const TraceFn& trace_;

  std::vector<uint8_t> working_;
  const std::vector<uint8_t>& backup_;
  uint32_t var_count_ = 0;
  uint32_t instr_count_ = 0;
  size_t code_off_ = 0;
  std::vector<int32_t> store_;
  std::vector<int32_t> prot_index_;
  uint64_t pc_ = 0;
  RunResult res_;

  // The flip lands immediately before the trigger-th dynamic instruction.
  // Code faults hit the working image; data faults hit whichever store is
  // live at that moment (a twin leg's scratch during twin execution).
  void fire_fault_if_due(std::vector<int32_t>& active_store) {
    if (!fault_ || res_.fault_applied || res_.dyn_instr != fault_->trigger) return;
    if (fault_->segment == FaultSegment::Code) {
      working_[code_off_ + fault_->byte_index] =
          flip_bit(working_[code_off_ + fault_->byte_index], fault_->bit_index);
    } else {
      uint32_t word = fault_->byte_index / 4;
      uint32_t bit = 8 * (fault_->byte_index % 4) + fault_->bit_index;
      active_store[word] =
          static_cast<int32_t>(static_cast<uint32_t>(active_store[word]) ^ (1u << bit));
    }
    res_.fault_applied = fault_;
  }

  // One instruction outside any protected range; effects commit immediately.
  // Returns false when the run is over.
  bool committed_step() {
    if (res_.dyn_instr >= step_limit_) {
      res_.status = RunStatus::StepLimit;
      return false;
    }
    fire_fault_if_due(store_);
    Fetched f = fetch(working_, code_off_, var_count_, instr_count_, pc_);
    if (!f.ok) {
      res_.status = RunStatus::Trapped;
      res_.trap = f.trap;
      return false;
    }
    StepEffect e;
    TrapInfo trap;
    if (!exec_one(f.ins, pc_, store_, e, trap)) {
      res_.status = RunStatus::Trapped;
      res_.trap = trap;
      return false;
    }
    if (e.out) res_.output.push_back(*e.out);
    if (trace_) trace_(res_.dyn_instr, static_cast<uint32_t>(pc_), f.ins.opcode, e.write);
    ++res_.dyn_instr;
    pc_ = e.next_pc;
    return true;
  }

  LegResult run_leg(const std::vector<uint8_t>& image, std::vector<int32_t>& scratch,
                    uint64_t entry, const ProtectedRange& range) {
    LegResult leg;
    uint64_t pc = entry;
    while (pc != kHaltExit && pc >= range.begin && pc < range.end) {
      if (res_.dyn_instr >= step_limit_) {
        leg.end = LegResult::End::StepLimit;
        return leg;
      }
      fire_fault_if_due(scratch);
      Fetched f = fetch(image, code_off_, var_count_, instr_count_, pc);
      if (!f.ok) {
        leg.end = LegResult::End::Trapped;
        leg.trap = f.trap;
        return leg;
      }
      StepEffect e;
      TrapInfo trap;
      if (!exec_one(f.ins, pc, scratch, e, trap)) {
        leg.end = LegResult::End::Trapped;
        leg.trap = trap;
        return leg;
      }
      if (e.write) leg.writes.push_back(*e.write);
      if (e.out) leg.outs.push_back(*e.out);
      if (trace_) trace_(res_.dyn_instr, static_cast<uint32_t>(pc), f.ins.opcode, e.write);
      ++res_.dyn_instr;
      pc = e.next_pc;
    }
    leg.exit_pc = pc;
    return leg;
  }

  void commit(std::vector<int32_t>&& scratch, const LegResult& leg) {
    store_ = std::move(scratch);
    res_.output.insert(res_.output.end(), leg.outs.begin(), leg.outs.end());
  }

  // Twin execution: the block runs once from the working image and once
  // from the backup, both against private copies of the snapshot. Matching
  // outcomes commit; a mismatch restores the block's code bytes from the
  // backup and re-executes it once more before committing.
  bool protected_block(const ProtectedRange& range) {
    uint64_t entry = pc_;
    std::vector<int32_t> snapshot = store_;

    std::vector<int32_t> s1 = snapshot;
    LegResult l1 = run_leg(working_, s1, entry, range);
    if (l1.end == LegResult::End::StepLimit) {
      res_.status = RunStatus::StepLimit;
      return false;
    }
    std::vector<int32_t> s2 = snapshot;
    LegResult l2 = run_leg(backup_, s2, entry, range);
    if (l2.end == LegResult::End::StepLimit) {
      res_.status = RunStatus::StepLimit;
      return false;
    }

    bool same = l1.end == l2.end && l1.writes == l2.writes && l1.outs == l2.outs &&
                (l1.end == LegResult::End::Trapped ? l1.trap == l2.trap
                                                   : l1.exit_pc == l2.exit_pc);
    if (same) {
      commit(std::move(s1), l1);
      if (l1.end == LegResult::End::Trapped) {
        res_.status = RunStatus::Trapped;
        res_.trap = l1.trap;
        return false;
      }
      pc_ = l1.exit_pc;
      return true;
    }

    res_.detections.push_back({range.block, res_.dyn_instr});
    size_t off = code_off_ + size_t(kInstrRecordSize) * range.begin;
    size_t len = size_t(kInstrRecordSize) * (range.end - range.begin);
    std::memcpy(working_.data() + off, backup_.data() + off, len);

    std::vector<int32_t> s3 = snapshot;
    LegResult l3 = run_leg(backup_, s3, entry, range);
    if (l3.end == LegResult::End::StepLimit) {
      res_.status = RunStatus::StepLimit;
      return false;
    }
    commit(std::move(s3), l3);
    if (l3.end == LegResult::End::Trapped) {
      res_.status = RunStatus::Trapped;
      res_.trap = l3.trap;
      return false;
    }
    ++res_.recoveries;
    pc_ = l3.exit_pc;
    return true;
  }
};

}  // namespace

RunResult run(const HardenedProgram& h, uint64_t step_limit, std::optional<FaultSpec> fault,
              const TraceFn& trace) {
  if (step_limit == 0) throw Error("step limit must be positive");
  verify_backup(h);
  decode(h.backup);  // malformed backups are a load error, not a trap
  if (fault) {
    if (fault->bit_index > 7) throw Error("fault bit index must be 0..7");
    size_t limit = fault->segment == FaultSegment::Code ? h.working.code_size()
                                                        : h.working.data_size();
    if (fault->byte_index >= limit) {
      throw Error("fault byte index " + std::to_string(fault->byte_index) +
                  " outside the " + std::string(fault_segment_text(fault->segment)) +
                  " segment");
    }
  }
  Engine engine(h, step_limit, fault, trace);
  return engine.run_all();
}

}  // namespace sft
