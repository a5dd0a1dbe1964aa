#pragma once

// Seeded pseudo-random source. Engine output is specified by the standard, and
// all derived draws are computed here rather than through <random>
// distributions, so streams are identical across standard libraries.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace ecn {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Full engine state as text, restorable with set_state().
  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

/// Independent stream seed for a named sub-task (FNV-1a of `key` mixed with `master`).
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ecn
