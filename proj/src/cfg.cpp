#include <algorithm>
#include <map>
#include <set>

#include "sft/ir.hpp"

namespace sft {

Cfg build_cfg(const Program& p) {
  Cfg cfg;
  uint32_t n = static_cast<uint32_t>(p.instructions.size());
  if (n == 0) return cfg;

  std::set<uint32_t> leaders = {0};
  for (uint32_t i = 0; i < n; ++i) {
    const Instruction& ins = p.instructions[i];
    if (!ins.is_terminator()) continue;
    if (ins.opcode == Opcode::Jmp) {
      leaders.insert(static_cast<uint32_t>(ins.imm));
    } else if (ins.opcode == Opcode::Br) {
      leaders.insert(ins.then_target());
      leaders.insert(ins.else_target());
    }
    if (i + 1 < n) leaders.insert(i + 1);
  }

  std::map<uint32_t, uint32_t> block_at;  // leader -> block id
  for (uint32_t leader : leaders) {
    uint32_t id = static_cast<uint32_t>(cfg.blocks.size());
    block_at[leader] = id;
    cfg.blocks.push_back({id, leader, n});
  }
  for (size_t i = 0; i + 1 < cfg.blocks.size(); ++i) {
    cfg.blocks[i].end = cfg.blocks[i + 1].begin;
  }

  cfg.successors.resize(cfg.blocks.size());
  for (const BasicBlock& b : cfg.blocks) {
    const Instruction& last = p.instructions[b.end - 1];
    std::vector<uint32_t>& succ = cfg.successors[b.id];
    switch (last.opcode) {
      case Opcode::Halt:
        break;
      case Opcode::Jmp:
        succ.push_back(block_at.at(static_cast<uint32_t>(last.imm)));
        break;
      case Opcode::Br:
        succ.push_back(block_at.at(last.then_target()));
        succ.push_back(block_at.at(last.else_target()));
        break;
      default:
        // a leader split the straight-line code; fall through
        succ.push_back(block_at.at(b.end));
        break;
    }
    std::sort(succ.begin(), succ.end());
    succ.erase(std::unique(succ.begin(), succ.end()), succ.end());
  }
  cfg.entry = 0;
  return cfg;
}

}  // namespace sft
