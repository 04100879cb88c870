#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/ir.hpp"

namespace sft {

enum class HardenMode : uint8_t { None = 0, Critical, Full };

const char* harden_mode_text(HardenMode m);
HardenMode parse_harden_mode(const std::string& s);

struct ProtectedRange {
  uint32_t block = 0;
  uint32_t begin = 0;
  uint32_t end = 0;  // exclusive instruction index

  bool operator==(const ProtectedRange&) const = default;
};

struct Manifest {
  HardenMode mode = HardenMode::None;
  std::vector<ProtectedRange> protected_blocks;  // sorted by begin
  std::vector<uint8_t> protected_variables;      // sorted indices

  bool operator==(const Manifest&) const = default;
};

struct HardenedProgram {
  BinaryImage working;
  BinaryImage backup;
  uint32_t backup_crc = 0;
  Manifest manifest;
};

uint32_t crc32_ieee(std::span<const uint8_t> bytes);

// A block qualifies for duplication unless it is a lone unconditional jump
// or a lone halt; duplicating those buys no detection.
bool block_protectable(const Program& p, const BasicBlock& b);

HardenedProgram harden(const Program& p, const Cfg& cfg, HardenMode mode,
                       const std::vector<uint32_t>& critical_blocks = {},
                       const std::vector<uint8_t>& critical_vars = {});

// Throws if the working copy's protected ranges disagree with the backup or
// the backup fails its checksum.
void verify_backup(const HardenedProgram& h);

std::vector<uint8_t> save_container(const HardenedProgram& h);
HardenedProgram load_container(std::span<const uint8_t> bytes);

std::string manifest_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

}  // namespace sft
