#include <cstring>
#include <optional>
#include <string>

#include "sft/ir.hpp"

namespace sft {
namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_i32(std::vector<uint8_t>& out, int32_t value) {
  uint32_t v = static_cast<uint32_t>(value);
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint16_t get_u16(std::span<const uint8_t> b, size_t off) {
  return static_cast<uint16_t>(b[off] | (b[off + 1] << 8));
}

int32_t get_i32(std::span<const uint8_t> b, size_t off) {
  uint32_t v = static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
               (static_cast<uint32_t>(b[off + 2]) << 16) |
               (static_cast<uint32_t>(b[off + 3]) << 24);
  return static_cast<int32_t>(v);
}

struct Violation {
  DecodeCode code;
  std::string message;
};

// Canonical form: fields an opcode does not use are zero, every variable
// index is in range, every control target lands on an instruction.
std::optional<Violation> check_instruction(const Instruction& ins, uint32_t index,
                                           uint32_t var_count, uint32_t instr_count) {
  auto at = [index] { return " in instruction " + std::to_string(index); };
  uint8_t op = static_cast<uint8_t>(ins.opcode);
  if (op >= kOpcodeCount) {
    return Violation{DecodeCode::InvalidOpcode,
                     "invalid opcode " + std::to_string(op) + at()};
  }
  auto var_ok = [&](uint8_t v) { return static_cast<uint32_t>(v) < var_count; };
  auto bad_var = [&](uint8_t v) {
    return Violation{DecodeCode::VarIndexOutOfRange,
                     "variable index " + std::to_string(v) + " out of range" + at()};
  };
  auto bad_target = [&](uint32_t t) {
    return Violation{DecodeCode::TargetOutOfRange,
                     "branch target " + std::to_string(t) + " out of range" + at()};
  };
  auto noncanonical = [&] {
    return Violation{DecodeCode::NoncanonicalOperand,
                     "unused operand field is not zero" + at()};
  };

  switch (ins.opcode) {
    case Opcode::Halt:
      if (ins.dst || ins.a || ins.b || ins.imm) return noncanonical();
      return std::nullopt;
    case Opcode::Const:
      if (ins.a || ins.b) return noncanonical();
      if (!var_ok(ins.dst)) return bad_var(ins.dst);
      return std::nullopt;
    case Opcode::Mov:
      if (ins.b || ins.imm) return noncanonical();
      if (!var_ok(ins.dst)) return bad_var(ins.dst);
      if (!var_ok(ins.a)) return bad_var(ins.a);
      return std::nullopt;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::Div:
      if (ins.imm) return noncanonical();
      if (!var_ok(ins.dst)) return bad_var(ins.dst);
      if (!var_ok(ins.a)) return bad_var(ins.a);
      if (!var_ok(ins.b)) return bad_var(ins.b);
      return std::nullopt;
    case Opcode::Out:
      if (ins.dst || ins.b || ins.imm) return noncanonical();
      if (!var_ok(ins.a)) return bad_var(ins.a);
      return std::nullopt;
    case Opcode::Jmp: {
      if (ins.dst || ins.a || ins.b) return noncanonical();
      uint32_t t = static_cast<uint32_t>(ins.imm);
      if (ins.imm < 0 || t >= instr_count) return bad_target(t);
      return std::nullopt;
    }
    case Opcode::Br: {
      if (ins.dst >= kRelopCount) {
        return Violation{DecodeCode::InvalidOpcode,
                         "invalid comparison code " + std::to_string(ins.dst) + at()};
      }
      if (!var_ok(ins.a)) return bad_var(ins.a);
      if (!var_ok(ins.b)) return bad_var(ins.b);
      if (ins.then_target() >= instr_count) return bad_target(ins.then_target());
      if (ins.else_target() >= instr_count) return bad_target(ins.else_target());
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

BinaryImage encode(const Program& p) {
  if (p.variables.size() > kMaxVariables) throw Error("too many variables to encode");
  if (p.instructions.size() > kMaxInstructions) throw Error("too many instructions to encode");
  uint32_t var_count = static_cast<uint32_t>(p.variables.size());
  uint32_t instr_count = static_cast<uint32_t>(p.instructions.size());
  for (uint32_t i = 0; i < instr_count; ++i) {
    if (auto v = check_instruction(p.instructions[i], i, var_count, instr_count)) {
      throw Error("cannot encode: " + v->message);
    }
  }
  BinaryImage img;
  img.bytes.reserve(kHeaderSize + 4u * var_count + kInstrRecordSize * instr_count);
  img.bytes.assign(std::begin(kMagic), std::end(kMagic));
  put_u16(img.bytes, static_cast<uint16_t>(var_count));
  put_u16(img.bytes, static_cast<uint16_t>(instr_count));
  for (const Variable& v : p.variables) put_i32(img.bytes, v.initial);
  for (const Instruction& ins : p.instructions) {
    img.bytes.push_back(static_cast<uint8_t>(ins.opcode));
    img.bytes.push_back(ins.dst);
    img.bytes.push_back(ins.a);
    img.bytes.push_back(ins.b);
    put_i32(img.bytes, ins.imm);
  }
  return img;
}

Program decode(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4) throw DecodeError(DecodeCode::Truncated, "image shorter than its magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DecodeError(DecodeCode::BadMagic, "bad magic");
  }
  if (bytes.size() < kHeaderSize) {
    throw DecodeError(DecodeCode::Truncated, "image shorter than its header");
  }
  uint32_t var_count = get_u16(bytes, 4);
  uint32_t instr_count = get_u16(bytes, 6);
  if (var_count > kMaxVariables) {
    throw DecodeError(DecodeCode::VarCountLimit,
                      "variable count " + std::to_string(var_count) + " exceeds limit");
  }
  size_t expected = kHeaderSize + 4u * var_count + kInstrRecordSize * instr_count;
  if (bytes.size() < expected) {
    throw DecodeError(DecodeCode::Truncated,
                      "image is " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw DecodeError(DecodeCode::TrailingBytes,
                      std::to_string(bytes.size() - expected) + " trailing bytes");
  }

  Program p;
  p.variables.reserve(var_count);
  for (uint32_t i = 0; i < var_count; ++i) {
    p.variables.push_back({"v" + std::to_string(i), get_i32(bytes, kHeaderSize + 4u * i)});
  }
  size_t code = kHeaderSize + 4u * var_count;
  p.instructions.reserve(instr_count);
  for (uint32_t i = 0; i < instr_count; ++i) {
    size_t off = code + kInstrRecordSize * i;
    Instruction ins;
    ins.opcode = static_cast<Opcode>(bytes[off]);
    ins.dst = bytes[off + 1];
    ins.a = bytes[off + 2];
    ins.b = bytes[off + 3];
    ins.imm = get_i32(bytes, off + 4);
    if (auto v = check_instruction(ins, i, var_count, instr_count)) {
      throw DecodeError(v->code, v->message);
    }
    p.instructions.push_back(ins);
  }
  return p;
}

}  // namespace sft
