#include "ecn/losses.hpp"

#include <memory>

namespace ecn {
namespace {

template <typename T>
void check_inputs(const Tensor<T>& pred, const Tensor<T>& target) {
  const Shape4& a = pred.shape();
  const Shape4& b = target.shape();
  if (a.n != b.n) throw DimensionError("dice_loss", "n", a.str() + " vs " + b.str());
  if (a.c != b.c) throw DimensionError("dice_loss", "c", a.str() + " vs " + b.str());
  if (a.h != b.h) throw DimensionError("dice_loss", "h", a.str() + " vs " + b.str());
  if (a.w != b.w) throw DimensionError("dice_loss", "w", a.str() + " vs " + b.str());
  for (std::size_t i = 0; i < target.numel(); ++i) {
    if (target[i] != T(0) && target[i] != T(1)) throw UsageError("dice_loss: target must be binary");
  }
}

struct DiceSums {
  double inter = 0.0;
  double denom = 0.0;
};

template <typename T>
DiceSums dice_sums(const Tensor<T>& pred, const Tensor<T>& target) {
  DiceSums s;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double p = pred[i];
    const double g = target[i];
    s.inter += p * g;
    s.denom += p * p + g * g;
  }
  return s;
}

}  // namespace

template <typename T>
T dice_loss_value(const Tensor<T>& pred, const Tensor<T>& target, double eps) {
  check_inputs(pred, target);
  const DiceSums s = dice_sums(pred, target);
  return static_cast<T>(1.0 - (2.0 * s.inter + eps) / (s.denom + eps));
}

template <typename T>
Var<T> dice_loss(Var<T> pred, const Tensor<T>& target, double eps) {
  Tape<T>& t = pred.tape();
  check_inputs(pred.value(), target);
  const DiceSums s = dice_sums(pred.value(), target);
  const double num = 2.0 * s.inter + eps;
  const double den = s.denom + eps;
  auto g = std::make_shared<Tensor<T>>(target);
  return t.record(Tensor<T>({1, 1, 1, 1}, static_cast<T>(1.0 - num / den)), {pred},
                  [pred, g, num, den](Tape<T>& t, std::size_t self) {
                    const Tensor<T>& p = t.value(pred);
                    const double up = t.grad(self)[0];
                    Tensor<T> gp(p.shape());
                    for (std::size_t i = 0; i < p.numel(); ++i) {
                      const double d = -(2.0 * (*g)[i] * den - num * 2.0 * p[i]) / (den * den);
                      gp[i] = static_cast<T>(up * d);
                    }
                    t.accumulate(pred, std::move(gp));
                  });
}

template float dice_loss_value<float>(const Tensor<float>&, const Tensor<float>&, double);
template double dice_loss_value<double>(const Tensor<double>&, const Tensor<double>&, double);
template Var<float> dice_loss<float>(Var<float>, const Tensor<float>&, double);
template Var<double> dice_loss<double>(Var<double>, const Tensor<double>&, double);

}  // namespace ecn
