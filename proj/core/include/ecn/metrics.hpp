#pragma once

// Pixel confusion counts and the derived segmentation scores. Counts are
// pooled over all evaluated pixels, so per-image counts can be summed.

#include <cstdint>
#include <string>

#include "ecn/tensor.hpp"

namespace ecn {

inline constexpr double kDefaultThreshold = 0.5;

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// prob >= threshold -> 1, else 0.
template <typename T>
Tensor<T> binarize(const Tensor<T>& prob, double threshold = kDefaultThreshold);

/// Crack (1) is the positive class. Throws UsageError on non-binary input and
/// DimensionError on a shape mismatch.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred_mask, const Tensor<T>& target);

/// A ratio whose denominator is zero is reported as 0 with `defined` false.
struct Score {
  double value = 0.0;
  bool defined = true;
};

struct MetricsRecord {
  ConfusionCounts counts;
  Score re;
  Score pr;
  Score f1;
  Score iou_crack;       // tp / (tp + fp + fn)
  Score iou_background;  // tn / (tn + fn + fp)
  double miou = 0.0;     // mean of the two IoUs, undefined ones counted as 0
};

MetricsRecord metrics(const ConfusionCounts& counts);

/// One "key=value" per line; undefined scores also emit "<key>_undefined=1".
std::string format_metrics(const MetricsRecord& m);

}  // namespace ecn
