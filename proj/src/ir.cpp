#include "sft/ir.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace sft {

ParseError::ParseError(uint32_t line_, uint32_t column_, const std::string& message_)
    : Error("parse error at " + std::to_string(line_) + ":" + std::to_string(column_) + ": " + message_),
      line(line_),
      column(column_),
      message(message_) {}

DecodeError::DecodeError(DecodeCode code_, const std::string& message_)
    : Error("decode error: " + message_), code(code_) {}

const char* relop_text(Relop r) {
  switch (r) {
    case Relop::Eq: return "==";
    case Relop::Ne: return "!=";
    case Relop::Lt: return "<";
    case Relop::Ge: return ">=";
    case Relop::Gt: return ">";
    case Relop::Le: return "<=";
  }
  return "?";
}

Instruction make_br(Relop r, uint8_t a, uint8_t b, uint16_t then_target, uint16_t else_target) {
  Instruction ins;
  ins.opcode = Opcode::Br;
  ins.dst = static_cast<uint8_t>(r);
  ins.a = a;
  ins.b = b;
  ins.imm = static_cast<int32_t>(static_cast<uint32_t>(then_target) |
                                 (static_cast<uint32_t>(else_target) << 16));
  return ins;
}

bool Program::operator==(const Program& other) const {
  if (variables.size() != other.variables.size()) return false;
  for (size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].initial != other.variables[i].initial) return false;
  }
  return instructions == other.instructions;
}

std::optional<uint8_t> find_variable(const Program& p, const std::string& name) {
  for (size_t i = 0; i < p.variables.size(); ++i) {
    if (p.variables[i].name == name) return static_cast<uint8_t>(i);
  }
  return std::nullopt;
}

std::optional<uint8_t> defined_variable(const Instruction& ins) {
  switch (ins.opcode) {
    case Opcode::Const:
    case Opcode::Mov:
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::Div:
      return ins.dst;
    default:
      return std::nullopt;
  }
}

std::vector<uint8_t> used_variables(const Instruction& ins) {
  switch (ins.opcode) {
    case Opcode::Mov:
    case Opcode::Out:
      return {ins.a};
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::Div:
    case Opcode::Br:
      return {ins.a, ins.b};
    default:
      return {};
  }
}

uint16_t BinaryImage::var_count() const {
  if (bytes.size() < kHeaderSize) return 0;
  return static_cast<uint16_t>(bytes[4] | (bytes[5] << 8));
}

uint16_t BinaryImage::instr_count() const {
  if (bytes.size() < kHeaderSize) return 0;
  return static_cast<uint16_t>(bytes[6] | (bytes[7] << 8));
}

uint32_t Cfg::block_of(uint32_t instr_index) const {
  for (const auto& b : blocks) {
    if (instr_index >= b.begin && instr_index < b.end) return b.id;
  }
  throw Error("instruction index " + std::to_string(instr_index) + " is outside every block");
}

namespace {

std::string var_name(const Program& p, uint8_t v) {
  if (v < p.variables.size()) return p.variables[v].name;
  return "v" + std::to_string(static_cast<unsigned>(v));
}

}  // namespace

std::string disassemble(const Program& p) {
  // label every jump target, reusing source names when the program kept them
  std::set<std::string> taken;
  std::vector<std::string> label_at(p.instructions.size() + 1);
  for (const auto& [name, index] : p.labels) {
    if (index < label_at.size() && label_at[index].empty() && !taken.count(name)) {
      label_at[index] = name;
      taken.insert(name);
    }
  }
  std::set<uint32_t> targets;
  for (const auto& ins : p.instructions) {
    if (ins.opcode == Opcode::Jmp) {
      targets.insert(static_cast<uint32_t>(ins.imm));
    } else if (ins.opcode == Opcode::Br) {
      targets.insert(ins.then_target());
      targets.insert(ins.else_target());
    }
  }
  for (uint32_t t : targets) {
    if (t >= label_at.size() || !label_at[t].empty()) continue;
    std::string name = "L" + std::to_string(t);
    while (taken.count(name)) name += "_";
    label_at[t] = name;
    taken.insert(name);
  }

  std::ostringstream out;
  for (const auto& v : p.variables) {
    out << "var " << v.name << " = " << v.initial << "\n";
  }
  for (uint32_t i = 0; i < p.instructions.size(); ++i) {
    if (!label_at[i].empty()) out << label_at[i] << ":\n";
    const Instruction& ins = p.instructions[i];
    out << "  ";
    switch (ins.opcode) {
      case Opcode::Halt:
        out << "halt";
        break;
      case Opcode::Const:
        out << var_name(p, ins.dst) << " = " << ins.imm;
        break;
      case Opcode::Mov:
        out << var_name(p, ins.dst) << " = " << var_name(p, ins.a);
        break;
      case Opcode::Add:
        out << var_name(p, ins.dst) << " = " << var_name(p, ins.a) << " + " << var_name(p, ins.b);
        break;
      case Opcode::Sub:
        out << var_name(p, ins.dst) << " = " << var_name(p, ins.a) << " - " << var_name(p, ins.b);
        break;
      case Opcode::Mul:
        out << var_name(p, ins.dst) << " = " << var_name(p, ins.a) << " * " << var_name(p, ins.b);
        break;
      case Opcode::Div:
        out << var_name(p, ins.dst) << " = " << var_name(p, ins.a) << " / " << var_name(p, ins.b);
        break;
      case Opcode::Out:
        out << "out " << var_name(p, ins.a);
        break;
      case Opcode::Jmp:
        out << "jmp " << label_at[static_cast<uint32_t>(ins.imm)];
        break;
      case Opcode::Br:
        out << "br " << var_name(p, ins.a) << " " << relop_text(static_cast<Relop>(ins.dst)) << " "
            << var_name(p, ins.b) << " ? " << label_at[ins.then_target()] << " : "
            << label_at[ins.else_target()];
        break;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace sft
