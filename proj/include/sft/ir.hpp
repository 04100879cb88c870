#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sft {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(uint32_t line, uint32_t column, const std::string& message);
  uint32_t line;
  uint32_t column;
  std::string message;
};

enum class DecodeCode {
  BadMagic,
  Truncated,
  TrailingBytes,
  VarCountLimit,
  InvalidOpcode,
  NoncanonicalOperand,
  VarIndexOutOfRange,
  TargetOutOfRange,
};

struct DecodeError : Error {
  DecodeError(DecodeCode code, const std::string& message);
  DecodeCode code;
};

enum class Opcode : uint8_t { Halt = 0, Const, Mov, Add, Sub, Mul, Div, Out, Jmp, Br };
inline constexpr uint8_t kOpcodeCount = 10;

enum class Relop : uint8_t { Eq = 0, Ne, Lt, Ge, Gt, Le };
inline constexpr uint8_t kRelopCount = 6;
const char* relop_text(Relop r);

// 8-byte instruction record. dst holds the destination variable, except for
// Br where it holds the relop code. imm holds the Const value, the Jmp
// target, or the packed Br targets (then in the low 16 bits, else in the
// high 16). Fields an opcode does not use must be zero.
struct Instruction {
  Opcode opcode = Opcode::Halt;
  uint8_t dst = 0;
  uint8_t a = 0;
  uint8_t b = 0;
  int32_t imm = 0;

  uint16_t then_target() const { return static_cast<uint16_t>(static_cast<uint32_t>(imm) & 0xffffu); }
  uint16_t else_target() const { return static_cast<uint16_t>(static_cast<uint32_t>(imm) >> 16); }
  bool is_terminator() const {
    return opcode == Opcode::Halt || opcode == Opcode::Jmp || opcode == Opcode::Br;
  }
  bool operator==(const Instruction&) const = default;
};

Instruction make_br(Relop r, uint8_t a, uint8_t b, uint16_t then_target, uint16_t else_target);

struct Variable {
  std::string name;
  int32_t initial = 0;
};

// Three-address program over named 32-bit variables. Names and labels are
// source-level metadata the binary image does not carry, so equality compares
// initial values and instructions only.
struct Program {
  std::vector<Variable> variables;
  std::vector<Instruction> instructions;
  std::vector<std::pair<std::string, uint32_t>> labels;

  bool operator==(const Program& other) const;
};

inline constexpr uint32_t kMaxVariables = 256;
inline constexpr uint32_t kMaxInstructions = 65535;

std::optional<uint8_t> find_variable(const Program& p, const std::string& name);
std::optional<uint8_t> defined_variable(const Instruction& ins);
std::vector<uint8_t> used_variables(const Instruction& ins);

Program parse_text(const std::string& source);
std::string disassemble(const Program& p);

// Serialized program: "SFT1", var_count u16le, instr_count u16le, then
// var_count 4-byte initial values, then instr_count 8-byte records
// (opcode, dst, a, b, imm32le). The byte length is exact.
struct BinaryImage {
  std::vector<uint8_t> bytes;

  uint16_t var_count() const;
  uint16_t instr_count() const;
  size_t data_offset() const { return 8; }
  size_t data_size() const { return 4u * var_count(); }
  size_t code_offset() const { return 8 + data_size(); }
  size_t code_size() const { return 8u * instr_count(); }

  bool operator==(const BinaryImage&) const = default;
};

inline constexpr uint8_t kMagic[4] = {0x53, 0x46, 0x54, 0x31};
inline constexpr size_t kHeaderSize = 8;
inline constexpr size_t kInstrRecordSize = 8;

BinaryImage encode(const Program& p);
Program decode(std::span<const uint8_t> bytes);
inline Program decode(const BinaryImage& img) {
  return decode(std::span<const uint8_t>(img.bytes));
}

struct BasicBlock {
  uint32_t id = 0;
  uint32_t begin = 0;
  uint32_t end = 0;  // exclusive
};

struct Cfg {
  std::vector<BasicBlock> blocks;                 // ordered by begin, partition of the code
  std::vector<std::vector<uint32_t>> successors;  // deduplicated, indexed by block id
  uint32_t entry = 0;

  uint32_t block_of(uint32_t instr_index) const;
};

Cfg build_cfg(const Program& p);

}  // namespace sft
