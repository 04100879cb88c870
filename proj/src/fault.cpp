#include <charconv>
#include <string_view>

#include "sft/fault.hpp"
#include "sft/rng.hpp"

namespace sft {

const char* fault_segment_text(FaultSegment s) {
  return s == FaultSegment::Code ? "code" : "data";
}

uint8_t flip_bit(uint8_t byte, uint8_t bit_index) {
  if (bit_index > 7) throw Error("bit index must be 0..7");
  return static_cast<uint8_t>(byte ^ (1u << bit_index));
}

uint8_t msb_position_to_index(uint8_t position) {
  if (position < 1 || position > 8) throw Error("bit position must be 1..8");
  return static_cast<uint8_t>(8 - position);
}

std::string fault_text(const FaultSpec& f) {
  return std::string(fault_segment_text(f.segment)) + ":" + std::to_string(f.byte_index) + ":" +
         std::to_string(f.bit_index) + "@" + std::to_string(f.trigger);
}

namespace {

uint64_t parse_number(std::string_view text, const std::string& what) {
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("bad " + what + " in fault spec");
  }
  return value;
}

}  // namespace

FaultSpec parse_fault(const std::string& text) {
  // segment:byte:bit@trigger
  size_t c1 = text.find(':');
  size_t c2 = c1 == std::string::npos ? std::string::npos : text.find(':', c1 + 1);
  size_t at = c2 == std::string::npos ? std::string::npos : text.find('@', c2 + 1);
  if (at == std::string::npos) {
    throw Error("bad fault spec '" + text + "', expected segment:byte:bit@trigger");
  }
  FaultSpec f;
  std::string seg = text.substr(0, c1);
  if (seg == "code") {
    f.segment = FaultSegment::Code;
  } else if (seg == "data") {
    f.segment = FaultSegment::Data;
  } else {
    throw Error("bad segment '" + seg + "' in fault spec, expected code or data");
  }
  f.byte_index =
      static_cast<uint32_t>(parse_number({text.data() + c1 + 1, c2 - c1 - 1}, "byte index"));
  uint64_t bit = parse_number({text.data() + c2 + 1, at - c2 - 1}, "bit index");
  if (bit > 7) throw Error("bit index must be 0..7");
  f.bit_index = static_cast<uint8_t>(bit);
  f.trigger = parse_number({text.data() + at + 1, text.size() - at - 1}, "trigger");
  return f;
}

namespace {

void check_range(const TriggerRange& t) {
  if (t.first > t.last) throw Error("empty trigger range");
}

FaultSpec nth_fault(const BinaryImage& image, const TriggerRange& t, uint64_t index) {
  uint64_t triggers = t.last - t.first + 1;
  uint64_t per_byte = 8 * triggers;
  uint64_t byte_linear = index / per_byte;
  uint64_t rem = index % per_byte;
  FaultSpec f;
  if (byte_linear < image.code_size()) {
    f.segment = FaultSegment::Code;
    f.byte_index = static_cast<uint32_t>(byte_linear);
  } else {
    f.segment = FaultSegment::Data;
    f.byte_index = static_cast<uint32_t>(byte_linear - image.code_size());
  }
  f.bit_index = static_cast<uint8_t>(rem / triggers);
  f.trigger = t.first + rem % triggers;
  return f;
}

}  // namespace

uint64_t fault_space_size(const BinaryImage& image, const TriggerRange& triggers) {
  check_range(triggers);
  return static_cast<uint64_t>(image.code_size() + image.data_size()) * 8 *
         (triggers.last - triggers.first + 1);
}

std::vector<FaultSpec> enumerate_faults(const BinaryImage& image, const TriggerRange& triggers) {
  uint64_t total = fault_space_size(image, triggers);
  std::vector<FaultSpec> out;
  out.reserve(total);
  // code segment first, then data; bytes, bits, triggers ascending
  for (uint64_t i = 0; i < total; ++i) out.push_back(nth_fault(image, triggers, i));
  return out;
}

std::vector<FaultSpec> sample_faults(const BinaryImage& image, const TriggerRange& triggers,
                                     uint32_t count, uint64_t seed) {
  uint64_t total = fault_space_size(image, triggers);
  std::vector<FaultSpec> out;
  out.reserve(count);
  SplitMix64 rng(seed);
  for (uint32_t i = 0; i < count; ++i) out.push_back(nth_fault(image, triggers, rng.below(total)));
  return out;
}

}  // namespace sft
