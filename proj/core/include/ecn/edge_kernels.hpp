#pragma once

// Fixed 3x3 edge-detection kernels and the stencil operator that applies them.

#include <array>
#include <cstddef>

#include "ecn/autodiff.hpp"

namespace ecn {

/// Row-major 3x3 kernel; index (y + 1) * 3 + (x + 1) for x, y in {-1, 0, 1}.
using Kernel3x3 = std::array<double, 9>;

/// exp(-(x^2 + y^2) / 2 sigma^2) sampled on the integer grid and normalized to sum 1.
/// Only size 3 is supported.
Kernel3x3 gaussian_kernel(double sigma, std::size_t size = 3);

/// -(1 / pi sigma^4) [1 - r^2 / 2 sigma^2] exp(-r^2 / 2 sigma^2) sampled on the grid,
/// shifted to zero mean, and rounded to multiples of 2^-20 with the center set to
/// minus the sum of the rest, so the entries sum to exactly 0 in float and double.
Kernel3x3 log_kernel(double sigma, std::size_t size = 3);

/// Kernel whose stencil response is x - GaussianBlur(x).
Kernel3x3 dog_stencil(double sigma);

/// Per-channel y[p] = sum_i K_i * (x[p + o_i] - x[p]) with replicate padding.
/// For a kernel summing to zero this is plain cross-correlation with K; for
/// K = -gaussian it is x - blur(x). Every output is exactly 0 on constant maps.
template <typename T>
Tensor<T> stencil_forward(const Tensor<T>& x, const Kernel3x3& kernel);

template <typename T>
Tensor<T> stencil_backward(const Tensor<T>& grad_out, const Kernel3x3& kernel);

namespace ops {

template <typename T>
Var<T> edge_stencil(Var<T> x, const Kernel3x3& kernel);

}  // namespace ops
}  // namespace ecn
