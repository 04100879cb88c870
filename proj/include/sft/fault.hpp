#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/ir.hpp"

namespace sft {

enum class FaultSegment : uint8_t { Code = 0, Data = 1 };

const char* fault_segment_text(FaultSegment s);

// One single-bit upset: flip bit `bit_index` (0 = least significant) of byte
// `byte_index` in the chosen segment just before the trigger-th dynamic
// instruction executes.
struct FaultSpec {
  FaultSegment segment = FaultSegment::Code;
  uint32_t byte_index = 0;
  uint8_t bit_index = 0;
  uint64_t trigger = 0;

  bool operator==(const FaultSpec&) const = default;
};

uint8_t flip_bit(uint8_t byte, uint8_t bit_index);

// Maps a 1-based bit position counted from the most significant end of a
// byte onto the LSB-0 index used everywhere else (position 5 -> index 3).
uint8_t msb_position_to_index(uint8_t position);

std::string fault_text(const FaultSpec& f);
FaultSpec parse_fault(const std::string& text);

struct TriggerRange {
  uint64_t first = 0;
  uint64_t last = 0;  // inclusive
};

std::vector<FaultSpec> enumerate_faults(const BinaryImage& image, const TriggerRange& triggers);

uint64_t fault_space_size(const BinaryImage& image, const TriggerRange& triggers);

// Uniform pseudorandom sample of the enumeration space, without building it.
std::vector<FaultSpec> sample_faults(const BinaryImage& image, const TriggerRange& triggers,
                                     uint32_t count, uint64_t seed);

}  // namespace sft
