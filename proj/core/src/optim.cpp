#include "ecn/optim.hpp"

#include <cmath>

#include "ecn/errors.hpp"

namespace ecn {

template <typename T>
OptimState<T> OptimState<T>::init(const ParamStore<T>& params, const AdamConfig& config) {
  OptimState s;
  s.config = config;
  for (const auto& e : params) {
    s.m.emplace_back(e.value.shape());
    s.v.emplace_back(e.value.shape());
  }
  return s;
}

template <typename T>
void adam_step(ParamStore<T>& params, OptimState<T>& state) {
  if (!params.grads_ready()) throw UsageError("adam_step: gradients are not populated; run backward first");
  if (state.m.size() != params.size()) throw UsageError("adam_step: optimizer state does not match parameters");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& e = params[p];
    Tensor<T>& m = state.m[p];
    Tensor<T>& v = state.v[p];
    if (!(m.shape() == e.value.shape())) throw UsageError("adam_step: moment shape mismatch for " + e.name);
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double g = e.grad[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
      e.value[i] = static_cast<T>(e.value[i] - update);
    }
  }
  params.zero_grad();
}

template struct OptimState<float>;
template struct OptimState<double>;
template void adam_step<float>(ParamStore<float>&, OptimState<float>&);
template void adam_step<double>(ParamStore<double>&, OptimState<double>&);

}  // namespace ecn
