#include <algorithm>

#include "sft/random_program.hpp"
#include "sft/rng.hpp"

namespace sft {
namespace {

// Variable layout: three reserved read-only helpers, then scratch variables.
// unit (=1) and den (=2..8) are the only division operands and are never
// written, so no generated program can divide by zero. Loop counters are
// drawn from the scratch pool and locked against writes while their loop is
// open, so every loop runs a fixed small number of iterations.
constexpr uint8_t kUnit = 0;
constexpr uint8_t kFloor = 1;
constexpr uint8_t kDen = 2;
constexpr uint8_t kFirstScratch = 3;

class Builder {
 public:
  Builder(uint64_t seed, const GenBounds& bounds) : rng_(seed), bounds_(bounds) {}

  Program build() {
    if (bounds_.max_instructions < 1) throw Error("instruction bound must be at least 1");
    if (bounds_.max_instructions > kMaxInstructions || bounds_.max_variables > kMaxVariables) {
      throw Error("generator bounds exceed program limits");
    }
    if (bounds_.max_instructions == 1) {
      Program p;
      p.instructions.push_back({});
      return p;
    }
    if (bounds_.max_variables < kFirstScratch + 1) {
      throw Error("variable bound too small for a nontrivial program");
    }

    p_.variables.push_back({"unit", 1});
    p_.variables.push_back({"floor", 0});
    p_.variables.push_back({"den", static_cast<int32_t>(2 + rng_.below(7))});
    uint32_t scratch = 1 + static_cast<uint32_t>(
                               rng_.below(bounds_.max_variables - kFirstScratch));
    for (uint32_t i = 0; i < scratch; ++i) {
      p_.variables.push_back(
          {"x" + std::to_string(i), static_cast<int32_t>(rng_.range(-10, 10))});
    }

    std::vector<uint8_t> counters;
    segments(bounds_.max_instructions - 2, 0, counters);

    Instruction out;
    out.opcode = Opcode::Out;
    out.a = any_scratch();
    p_.instructions.push_back(out);
    p_.instructions.push_back({});  // halt
    return std::move(p_);
  }

 private:
  SplitMix64 rng_;
  GenBounds bounds_;
  Program p_;

  uint8_t var_count() const { return static_cast<uint8_t>(p_.variables.size()); }
  uint8_t any_var() { return static_cast<uint8_t>(rng_.below(var_count())); }
  uint8_t any_scratch() {
    return static_cast<uint8_t>(kFirstScratch +
                                rng_.below(var_count() - kFirstScratch));
  }

  uint8_t writable_scratch(const std::vector<uint8_t>& counters) {
    while (true) {
      uint8_t v = any_scratch();
      if (std::find(counters.begin(), counters.end(), v) == counters.end()) return v;
    }
  }

  std::optional<uint8_t> free_counter(const std::vector<uint8_t>& counters) {
    // keep at least one scratch variable writable inside the loop body
    uint32_t scratch = var_count() - kFirstScratch;
    if (scratch < counters.size() + 2) return std::nullopt;
    while (true) {
      uint8_t v = any_scratch();
      if (std::find(counters.begin(), counters.end(), v) == counters.end()) return v;
    }
  }

  uint32_t here() const { return static_cast<uint32_t>(p_.instructions.size()); }

  // Appends at most `budget` instructions (at least one when budget > 0).
  void segments(uint32_t budget, uint32_t depth, std::vector<uint8_t>& counters) {
    while (budget > 0) {
      uint64_t roll = rng_.below(100);
      if (budget >= 5 && depth < 2 && roll < 22) {
        if (auto counter = free_counter(counters)) {
          budget -= emit_loop(budget, depth, counters, *counter);
          continue;
        }
      }
      if (budget >= 4 && depth < 2 && roll < 45) {
        budget -= emit_diamond(budget, depth, counters);
        continue;
      }
      emit_simple(counters);
      budget -= 1;
    }
  }

  void emit_simple(const std::vector<uint8_t>& counters) {
    uint64_t roll = rng_.below(8);
    Instruction ins;
    if (roll == 7) {
      ins.opcode = Opcode::Out;
      ins.a = any_var();
      p_.instructions.push_back(ins);
      return;
    }
    ins.dst = writable_scratch(counters);
    switch (roll) {
      case 0:
      case 1:
        ins.opcode = Opcode::Const;
        ins.imm = static_cast<int32_t>(rng_.range(-10, 10));
        break;
      case 2:
        ins.opcode = Opcode::Mov;
        ins.a = any_var();
        break;
      case 3:
        ins.opcode = Opcode::Add;
        ins.a = any_var();
        ins.b = any_var();
        break;
      case 4:
        ins.opcode = Opcode::Sub;
        ins.a = any_var();
        ins.b = any_var();
        break;
      case 5:
        ins.opcode = Opcode::Mul;
        ins.a = any_var();
        ins.b = any_var();
        break;
      default:
        ins.opcode = Opcode::Div;
        ins.a = any_var();
        ins.b = rng_.below(2) ? kUnit : kDen;
        break;
    }
    p_.instructions.push_back(ins);
  }

  Relop any_relop() { return static_cast<Relop>(rng_.below(kRelopCount)); }

  // br ? then.. jmp join : else.. join
  uint32_t emit_diamond(uint32_t budget, uint32_t depth, std::vector<uint8_t>& counters) {
    uint32_t avail = budget - 2;
    uint32_t then_budget = 1 + static_cast<uint32_t>(rng_.below(std::min(avail - 1, 6u)));
    uint32_t else_budget =
        1 + static_cast<uint32_t>(rng_.below(std::min(avail - then_budget, 4u)));

    uint32_t br_at = here();
    p_.instructions.push_back(make_br(any_relop(), any_var(), any_var(), 0, 0));
    segments(then_budget, depth + 1, counters);
    uint32_t jmp_at = here();
    Instruction jmp;
    jmp.opcode = Opcode::Jmp;
    p_.instructions.push_back(jmp);
    uint32_t else_at = here();
    segments(else_budget, depth + 1, counters);
    uint32_t join = here();

    p_.instructions[br_at] = make_br(static_cast<Relop>(p_.instructions[br_at].dst),
                                     p_.instructions[br_at].a, p_.instructions[br_at].b,
                                     static_cast<uint16_t>(br_at + 1),
                                     static_cast<uint16_t>(else_at));
    p_.instructions[jmp_at].imm = static_cast<int32_t>(join);
    return here() - br_at;
  }

  // counter = k; header: br counter > floor ? body : exit;
  // body..; counter -= unit; jmp header
  uint32_t emit_loop(uint32_t budget, uint32_t depth, std::vector<uint8_t>& counters,
                     uint8_t counter) {
    uint32_t start = here();
    Instruction init;
    init.opcode = Opcode::Const;
    init.dst = counter;
    init.imm = static_cast<int32_t>(1 + rng_.below(3));
    p_.instructions.push_back(init);

    uint32_t header = here();
    p_.instructions.push_back(make_br(Relop::Gt, counter, kFloor, 0, 0));

    counters.push_back(counter);
    uint32_t body_budget = std::min(budget - 4, 8u);
    segments(body_budget, depth + 1, counters);
    counters.pop_back();

    Instruction dec;
    dec.opcode = Opcode::Sub;
    dec.dst = counter;
    dec.a = counter;
    dec.b = kUnit;
    p_.instructions.push_back(dec);
    Instruction jmp;
    jmp.opcode = Opcode::Jmp;
    jmp.imm = static_cast<int32_t>(header);
    p_.instructions.push_back(jmp);

    uint32_t exit = here();
    p_.instructions[header] = make_br(Relop::Gt, counter, kFloor,
                                      static_cast<uint16_t>(header + 1),
                                      static_cast<uint16_t>(exit));
    return exit - start;
  }
};

}  // namespace

Program generate_random_program(uint64_t seed, const GenBounds& bounds) {
  Builder b(seed, bounds);
  return b.build();
}

}  // namespace sft
