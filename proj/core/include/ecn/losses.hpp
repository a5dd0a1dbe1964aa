#pragma once

#include "ecn/autodiff.hpp"

namespace ecn {

inline constexpr double kDiceSmooth = 1.0;

/// 1 - (2 sum(p g) + eps) / (sum(p^2) + sum(g^2) + eps), pooled over every element.
/// Sums accumulate in double in index order.
template <typename T>
T dice_loss_value(const Tensor<T>& pred, const Tensor<T>& target, double eps = kDiceSmooth);

/// Differentiable with respect to `pred`. Throws DimensionError on a shape
/// mismatch and UsageError if `target` is not binary.
template <typename T>
Var<T> dice_loss(Var<T> pred, const Tensor<T>& target, double eps = kDiceSmooth);

}  // namespace ecn
