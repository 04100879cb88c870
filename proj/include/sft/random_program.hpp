#pragma once

#include <cstdint>

#include "sft/ir.hpp"

namespace sft {

struct GenBounds {
  uint32_t max_instructions = 64;
  uint32_t max_variables = 12;
};

// Seed-deterministic program generator. Every generated program halts on
// every path (loops count down a fresh counter), divides only by variables
// that are never written and never zero, and keeps all code reachable.
Program generate_random_program(uint64_t seed, const GenBounds& bounds = {});

}  // namespace sft
