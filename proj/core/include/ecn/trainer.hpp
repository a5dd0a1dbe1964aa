#pragma once

// Minibatch Dice-loss training with Adam, per-epoch validation, and
// best-checkpoint retention by validation mIoU.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ecn/augment.hpp"
#include "ecn/checkpoint.hpp"
#include "ecn/metrics.hpp"

namespace ecn {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch = 4;
  std::uint64_t seed = 7;
  AdamConfig adam;
  /// Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
  bool augment = false;
  AugmentConfig augment_config;
  double threshold = kDefaultThreshold;
  /// Receives "key=value" lines per step and per epoch when non-null.
  std::ostream* log = nullptr;
  bool log_steps = true;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::uint64_t step = 0;
  double train_loss = 0.0;  // mean over the epoch's steps
  std::optional<MetricsRecord> val;
  bool best = false;
};

struct TrainResult {
  Checkpoint final_state;
  Checkpoint best_state;
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
};

/// Stacks the selected samples into (B, 3, H, W) images and (B, 1, H, W) masks.
void stack_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                 Tensor4& images, Tensor4& masks);

/// Train-mode forward and Dice loss on one batch, backward, and one Adam step.
/// Returns the loss; throws DivergenceError when it is not finite.
double train_step(Model<float>& model, OptimState<float>& optim, const Tensor4& images,
                  const Tensor4& masks, std::uint64_t step);

/// Pooled confusion counts over `samples` in inference mode.
MetricsRecord evaluate(Model<float>& model, const std::vector<Sample>& samples,
                       double threshold = kDefaultThreshold, std::size_t batch = 4);

/// Throws UsageError if `train_set` is empty or smaller than the batch.
/// Model initialization uses derive_seed(seed, "init"), shuffling derive_seed(seed, "shuffle").
/// Without a validation set the best state is the epoch with the lowest training loss.
TrainResult train(const ArchSpec& spec, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config);

}  // namespace ecn
