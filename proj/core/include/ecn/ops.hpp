#pragma once

// Differentiable operations on tape variables. Each op computes its forward
// value with a kernel from kernels.hpp and registers the matching backward.

#include <array>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "ecn/autodiff.hpp"
#include "ecn/kernels.hpp"

namespace ecn::ops {

using kernels::Conv2dParams;

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, const std::type_identity_t<Var<T>>* bias, const Conv2dParams& p);

template <typename T>
Var<T> maxpool2d(Var<T> x, std::size_t k, std::size_t stride, std::size_t padding);

template <typename T>
Var<T> avgpool2d(Var<T> x, std::size_t k, std::size_t stride);

template <typename T>
Var<T> upsample_nearest2x(Var<T> x);

template <typename T>
Var<T> global_avgpool(Var<T> x);

enum class Mode { train, infer };

/// Running statistics updated in place in train mode by exponential moving
/// average: stat = (1 - momentum) * stat + momentum * batch_stat. The running
/// variance uses the unbiased batch variance.
template <typename T>
struct RunningStats {
  Tensor<T>* mean;
  Tensor<T>* var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, RunningStats<T> stats, Mode mode,
                 T eps = T(kBatchNormEps), T momentum = T(kBatchNormMomentum));

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> sigmoid(Var<T> x);

/// x * sigmoid(x), composed from primitives.
template <typename T>
Var<T> silu(Var<T> x);

/// `axes` is a bitmask of kernels::kAxisC / kAxisH / kAxisW.
template <typename T>
Var<T> softmax(Var<T> x, unsigned axes);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs);

template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t start, std::size_t count);

/// y[:, j * times + r] = x[:, j] for r < times.
template <typename T>
Var<T> repeat_channels(Var<T> x, std::size_t times);

template <typename T>
Var<T> dense(Var<T> x, Var<T> weight, const std::type_identity_t<Var<T>>* bias);

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(kLayerNormEps));

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> permute(Var<T> x, const std::array<int, 4>& perm);

template <typename T>
Var<T> reshape(Var<T> x, Shape4 shape);

template <typename T>
Var<T> unfold(Var<T> x, std::size_t ph, std::size_t pw);

template <typename T>
Var<T> fold(Var<T> x, std::size_t ph, std::size_t pw, std::size_t height, std::size_t width);

/// Sum of all elements as a (1, 1, 1, 1) scalar.
template <typename T>
Var<T> sum(Var<T> x);

}  // namespace ecn::ops
