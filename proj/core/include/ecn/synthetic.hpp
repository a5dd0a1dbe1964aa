#pragma once

// Procedural crack-like samples: a smooth textured background with dark
// polylines 1-3 px wide. Masks mark the line pixels.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ecn/image_io.hpp"

namespace ecn {

inline constexpr double kSyntheticMinPositive = 0.01;
inline constexpr double kSyntheticMaxPositive = 0.20;

/// One sample of size x size from its own seed; redrawn until the positive
/// fraction lies in [1%, 20%]. Throws ConfigError for size < 32.
Sample make_synthetic_sample(std::size_t size, std::uint64_t seed, std::string id);

/// Sample i uses derive_seed(seed, i) and id "synth_NNNN".
std::vector<Sample> make_synthetic_dataset(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace ecn
