#pragma once

// Binary checkpoint, little-endian throughout:
//   "ECNK" | u16 version | u32 len + spec text | u64 seed | u64 epoch | u64 step
//   | f64 best_metric | u32 len + rng state | u32 count + params | u32 count + buffers
//   | adam: f64 lr, beta1, beta2, eps | u64 step | u32 count + (m, v) pairs
//   | u32 CRC-32 of every preceding byte
// A tensor is u32 name length + name + 4 x u32 shape + f32 data.

#include <cstdint>
#include <string>
#include <vector>

#include "ecn/model.hpp"
#include "ecn/optim.hpp"

namespace ecn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct TrainProgress {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double best_metric = 0.0;
  std::string rng_state;
};

struct Checkpoint {
  Model<float> model;
  OptimState<float> optim;
  TrainProgress progress;
};

std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model, const OptimState<float>& optim,
                                               const TrainProgress& progress);

/// Throws ChecksumError (corrupt or truncated), FormatError (bad magic or
/// version), or SpecMismatchError (tensors disagree with the embedded spec, or
/// the embedded spec differs from `expected` when given).
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const ArchSpec* expected = nullptr);

void save_checkpoint(const std::string& path, const Model<float>& model, const OptimState<float>& optim,
                     const TrainProgress& progress);

Checkpoint load_checkpoint(const std::string& path, const ArchSpec* expected = nullptr);

}  // namespace ecn
