#pragma once

#include <atomic>
#include <cstdint>

namespace attnamer {

// Process-wide work counters. Tests read them to check which code paths ran
// and how much work they did.
struct Counters {
  // Parameter updates applied by the gradient-descent baselines.
  std::atomic<std::uint64_t> gradient_steps{0};
  // Query/key inner products evaluated by the attention module.
  std::atomic<std::uint64_t> similarity_evaluations{0};
  // Key rows appended to a knowledge store.
  std::atomic<std::uint64_t> key_appends{0};
};

Counters& counters();

}  // namespace attnamer
