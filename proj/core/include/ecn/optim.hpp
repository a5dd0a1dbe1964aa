#pragma once

#include <cstdint>
#include <vector>

#include "ecn/params.hpp"

namespace ecn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments are stored in parameter order and match parameter shapes.
template <typename T>
struct OptimState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  static OptimState init(const ParamStore<T>& params, const AdamConfig& config = {});
};

/// Bias-corrected Adam update, then zeroes the gradients. Throws UsageError if
/// backward has not populated the gradients since the last step.
template <typename T>
void adam_step(ParamStore<T>& params, OptimState<T>& state);

extern template struct OptimState<float>;
extern template struct OptimState<double>;

}  // namespace ecn
