#pragma once

#include <cstdint>
#include <random>

namespace ivope {

using Rng = std::mt19937_64;

/// Named random streams. Every consumer of randomness in an experiment draws
/// its generator from (experiment seed, stream, index) so that adding a new
/// consumer never shifts the draws of an existing one.
enum class Stream : std::uint64_t {
  transitions = 1,
  shifted_states = 2,
  split = 3,
  target_actions = 4,
  init = 5,
  minibatch = 6,
  monte_carlo = 7,
  features = 8,
  search = 9,
  evaluation = 10,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

}  // namespace ivope
