#pragma once

// Paired training runs comparing the full architecture with one block family
// disabled, on one fixed synthetic split over several seeds.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ecn/trainer.hpp"

namespace ecn {

struct AblationConfig {
  ArchSpec spec;  // full model; input size must match image_size
  std::size_t train_count = 64;
  std::size_t val_count = 16;
  std::size_t image_size = 32;
  std::uint64_t data_seed = 2024;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::string> variants{"eem", "ulsam", "mobilevit"};
  TrainConfig train;
  /// Worker threads; runs are independent, so results do not depend on this.
  std::size_t threads = 1;
};

struct AblationRun {
  std::string variant;  // "full" or the disabled block
  std::uint64_t seed = 0;
  double best_miou = 0.0;
};

struct AblationComparison {
  std::string variant;
  std::size_t full_at_least_as_good = 0;  // seeds where full >= ablated
  std::size_t seeds = 0;
  double mean_full = 0.0;
  double mean_ablated = 0.0;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  std::vector<AblationComparison> comparisons;
};

AblationReport run_ablation(const AblationConfig& config);

/// "variant=<v> seed=<s> best_miou=<m>" per run, then one summary line per variant.
std::string format_ablation(const AblationReport& report);

}  // namespace ecn
