#include "ecn/ops.hpp"

#include <algorithm>
#include <memory>

namespace ecn::ops {

namespace k = ecn::kernels;

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, const std::type_identity_t<Var<T>>* bias, const Conv2dParams& p) {
  Tape<T>& t = x.tape();
  const Tensor<T>* b = bias != nullptr ? &bias->value() : nullptr;
  Tensor<T> y = k::conv2d_forward(x.value(), weight.value(), b, p);
  std::vector<Var<T>> inputs{x, weight};
  Var<T> bv;
  if (bias != nullptr) {
    bv = *bias;
    inputs.push_back(bv);
  }
  return t.record(std::move(y), inputs, [x, weight, bv, p](Tape<T>& t, std::size_t self) {
    Tensor<T> gx, gw, gb;
    k::conv2d_backward(t.value(x), t.value(weight), t.grad(self), p,
                       t.requires_grad(x) ? &gx : nullptr,
                       t.requires_grad(weight) ? &gw : nullptr,
                       bv.valid() && t.requires_grad(bv) ? &gb : nullptr);
    if (!gx.empty()) t.accumulate(x, std::move(gx));
    if (!gw.empty()) t.accumulate(weight, std::move(gw));
    if (!gb.empty()) t.accumulate(bv, std::move(gb));
  });
}

template <typename T>
Var<T> maxpool2d(Var<T> x, std::size_t kk, std::size_t stride, std::size_t padding) {
  Tape<T>& t = x.tape();
  auto r = k::maxpool2d_forward(x.value(), kk, stride, padding);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(std::move(r.argmax));
  const Shape4 is = x.shape();
  return t.record(std::move(r.output), {x}, [x, argmax, is](Tape<T>& t, std::size_t self) {
    t.accumulate(x, k::maxpool2d_backward(is, *argmax, t.grad(self)));
  });
}

template <typename T>
Var<T> avgpool2d(Var<T> x, std::size_t kk, std::size_t stride) {
  Tape<T>& t = x.tape();
  const Shape4 is = x.shape();
  return t.record(k::avgpool2d_forward(x.value(), kk, stride), {x},
                  [x, is, kk, stride](Tape<T>& t, std::size_t self) {
                    t.accumulate(x, k::avgpool2d_backward(is, kk, stride, t.grad(self)));
                  });
}

template <typename T>
Var<T> upsample_nearest2x(Var<T> x) {
  Tape<T>& t = x.tape();
  return t.record(k::upsample_nearest2x_forward(x.value()), {x},
                  [x](Tape<T>& t, std::size_t self) {
                    t.accumulate(x, k::upsample_nearest2x_backward(t.grad(self)));
                  });
}

template <typename T>
Var<T> global_avgpool(Var<T> x) {
  Tape<T>& t = x.tape();
  const Shape4 is = x.shape();
  return t.record(k::global_avgpool_forward(x.value()), {x}, [x, is](Tape<T>& t, std::size_t self) {
    t.accumulate(x, k::global_avgpool_backward(is, t.grad(self)));
  });
}

template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, RunningStats<T> stats, Mode mode, T eps,
                 T momentum) {
  Tape<T>& t = x.tape();
  const bool train = mode == Mode::train;
  auto saved = std::make_shared<k::NormSaved<T>>(
      train ? k::batchnorm_train_forward(x.value(), gamma.value(), beta.value(), eps)
            : k::batchnorm_infer_forward(x.value(), gamma.value(), beta.value(), *stats.mean,
                                         *stats.var, eps));
  if (train) {
    const Shape4& s = x.shape();
    const T m = static_cast<T>(s.n * s.plane());
    const T unbias = m / (m - T(1));
    for (std::size_t c = 0; c < s.c; ++c) {
      (*stats.mean)[c] = (T(1) - momentum) * (*stats.mean)[c] + momentum * saved->mean[c];
      (*stats.var)[c] = (T(1) - momentum) * (*stats.var)[c] + momentum * saved->variance[c] * unbias;
    }
  }
  Tensor<T> y = std::move(saved->output);
  saved->output = Tensor<T>();
  return t.record(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, saved, train](Tape<T>& t, std::size_t self) {
                    Tensor<T> gx, gg, gb;
                    k::batchnorm_backward(*saved, t.value(gamma), t.grad(self), train,
                                          t.requires_grad(x) ? &gx : nullptr,
                                          t.requires_grad(gamma) ? &gg : nullptr,
                                          t.requires_grad(beta) ? &gb : nullptr);
                    if (!gx.empty()) t.accumulate(x, std::move(gx));
                    if (!gg.empty()) t.accumulate(gamma, std::move(gg));
                    if (!gb.empty()) t.accumulate(beta, std::move(gb));
                  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tape<T>& t = x.tape();
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  return t.record(std::move(y), {x}, [x](Tape<T>& t, std::size_t self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& g = t.grad(self);
    Tensor<T> gx(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] = xv[i] > T(0) ? g[i] : T(0);
    t.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tape<T>& t = x.tape();
  return t.record(k::sigmoid_forward(x.value()), {x}, [x](Tape<T>& t, std::size_t self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& g = t.grad(self);
    Tensor<T> gx(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) gx[i] = g[i] * y[i] * (T(1) - y[i]);
    t.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var<T> silu(Var<T> x) {
  return mul(x, sigmoid(x));
}

template <typename T>
Var<T> softmax(Var<T> x, unsigned axes) {
  Tape<T>& t = x.tape();
  return t.record(k::softmax_forward(x.value(), axes), {x}, [x, axes](Tape<T>& t, std::size_t self) {
    t.accumulate(x, k::softmax_backward(t.value(self), t.grad(self), axes));
  });
}

namespace {

template <typename T>
Var<T> binary(k::BinaryOp op, Var<T> a, Var<T> b) {
  Tape<T>& t = a.tape();
  const char* name = op == k::BinaryOp::add ? "add" : (op == k::BinaryOp::sub ? "sub" : "mul");
  const k::Broadcast kind = k::broadcast_kind(a.shape(), b.shape(), name);
  return t.record(k::binary_forward(op, a.value(), b.value()), {a, b},
                  [op, a, b, kind](Tape<T>& t, std::size_t self) {
                    const Tensor<T>& g = t.grad(self);
                    if (op == k::BinaryOp::mul) {
                      if (t.requires_grad(a)) t.accumulate(a, k::binary_forward(op, g, t.value(b)));
                      if (t.requires_grad(b)) {
                        Tensor<T> full = k::binary_forward(op, g, t.value(a));
                        t.accumulate(b, k::reduce_to_broadcast(full, t.value(b).shape(), kind));
                      }
                      return;
                    }
                    if (t.requires_grad(a)) t.accumulate(a, g);
                    if (t.requires_grad(b)) {
                      Tensor<T> gb = k::reduce_to_broadcast(g, t.value(b).shape(), kind);
                      if (op == k::BinaryOp::sub) {
                        for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] = -gb[i];
                      }
                      t.accumulate(b, std::move(gb));
                    }
                  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(k::BinaryOp::add, a, b);
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(k::BinaryOp::sub, a, b);
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(k::BinaryOp::mul, a, b);
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tape<T>& t = x.tape();
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] * factor;
  return t.record(std::move(y), {x}, [x, factor](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T> gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * factor;
    t.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels", "c", "no inputs");
  Tape<T>& t = inputs.front().tape();
  std::vector<const Tensor<T>*> values;
  values.reserve(inputs.size());
  for (const Var<T>& v : inputs) values.push_back(&v.value());
  return t.record(k::concat_channels(values), inputs, [inputs](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    std::size_t start = 0;
    for (const Var<T>& v : inputs) {
      const std::size_t c = t.value(v).shape().c;
      if (t.requires_grad(v)) t.accumulate(v, k::slice_channels(g, start, c));
      start += c;
    }
  });
}

template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t start, std::size_t count) {
  Tape<T>& t = x.tape();
  return t.record(k::slice_channels(x.value(), start, count), {x},
                  [x, start, count](Tape<T>& t, std::size_t self) {
                    const Tensor<T>& g = t.grad(self);
                    const Shape4& s = t.value(x).shape();
                    Tensor<T> gx(s);
                    for (std::size_t n = 0; n < s.n; ++n) {
                      const T* src = g.ptr() + g.offset(n, 0, 0, 0);
                      std::copy(src, src + count * s.plane(), gx.ptr() + gx.offset(n, start, 0, 0));
                    }
                    t.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> dense(Var<T> x, Var<T> weight, const std::type_identity_t<Var<T>>* bias) {
  Tape<T>& t = x.tape();
  const Tensor<T>* b = bias != nullptr ? &bias->value() : nullptr;
  Tensor<T> y = k::dense_forward(x.value(), weight.value(), b);
  std::vector<Var<T>> inputs{x, weight};
  Var<T> bv;
  if (bias != nullptr) {
    bv = *bias;
    inputs.push_back(bv);
  }
  return t.record(std::move(y), inputs, [x, weight, bv](Tape<T>& t, std::size_t self) {
    Tensor<T> gx, gw, gb;
    k::dense_backward(t.value(x), t.value(weight), t.grad(self),
                      t.requires_grad(x) ? &gx : nullptr, t.requires_grad(weight) ? &gw : nullptr,
                      bv.valid() && t.requires_grad(bv) ? &gb : nullptr);
    if (!gx.empty()) t.accumulate(x, std::move(gx));
    if (!gw.empty()) t.accumulate(weight, std::move(gw));
    if (!gb.empty()) t.accumulate(bv, std::move(gb));
  });
}

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  Tape<T>& t = x.tape();
  auto saved = std::make_shared<k::NormSaved<T>>(
      k::layernorm_forward(x.value(), gamma.value(), beta.value(), eps));
  Tensor<T> y = std::move(saved->output);
  saved->output = Tensor<T>();
  return t.record(std::move(y), {x, gamma, beta}, [x, gamma, beta, saved](Tape<T>& t, std::size_t self) {
    Tensor<T> gx, gg, gb;
    k::layernorm_backward(*saved, t.value(gamma), t.grad(self), t.requires_grad(x) ? &gx : nullptr,
                          t.requires_grad(gamma) ? &gg : nullptr,
                          t.requires_grad(beta) ? &gb : nullptr);
    if (!gx.empty()) t.accumulate(x, std::move(gx));
    if (!gg.empty()) t.accumulate(gamma, std::move(gg));
    if (!gb.empty()) t.accumulate(beta, std::move(gb));
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = a.tape();
  return t.record(k::matmul_forward(a.value(), b.value()), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    Tensor<T> ga, gb;
    k::matmul_backward(t.value(a), t.value(b), t.grad(self), t.requires_grad(a) ? &ga : nullptr,
                       t.requires_grad(b) ? &gb : nullptr);
    if (!ga.empty()) t.accumulate(a, std::move(ga));
    if (!gb.empty()) t.accumulate(b, std::move(gb));
  });
}

template <typename T>
Var<T> permute(Var<T> x, const std::array<int, 4>& perm) {
  Tape<T>& t = x.tape();
  const std::array<int, 4> inv = k::inverse_permutation(perm);
  return t.record(k::permute(x.value(), perm), {x}, [x, inv](Tape<T>& t, std::size_t self) {
    t.accumulate(x, k::permute(t.grad(self), inv));
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape4 shape) {
  Tape<T>& t = x.tape();
  const Shape4 original = x.shape();
  return t.record(x.value().reshaped(shape), {x}, [x, original](Tape<T>& t, std::size_t self) {
    t.accumulate(x, t.grad(self).reshaped(original));
  });
}

template <typename T>
Var<T> unfold(Var<T> x, std::size_t ph, std::size_t pw) {
  Tape<T>& t = x.tape();
  const Shape4 is = x.shape();
  return t.record(k::unfold_patches(x.value(), ph, pw), {x}, [x, ph, pw, is](Tape<T>& t, std::size_t self) {
    t.accumulate(x, k::fold_patches(t.grad(self), ph, pw, is.h, is.w));
  });
}

template <typename T>
Var<T> fold(Var<T> x, std::size_t ph, std::size_t pw, std::size_t height, std::size_t width) {
  Tape<T>& t = x.tape();
  return t.record(k::fold_patches(x.value(), ph, pw, height, width), {x},
                  [x, ph, pw](Tape<T>& t, std::size_t self) {
                    t.accumulate(x, k::unfold_patches(t.grad(self), ph, pw));
                  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = x.tape();
  const Tensor<T>& xv = x.value();
  T acc = T(0);
  for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  return t.record(Tensor<T>({1, 1, 1, 1}, acc), {x}, [x](Tape<T>& t, std::size_t self) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), t.grad(self)[0]));
  });
}

template <typename T>
Var<T> repeat_channels(Var<T> x, std::size_t times) {
  Tape<T>& t = x.tape();
  if (times == 0) throw DimensionError("repeat_channels", "c", "repeat count must be >= 1");
  const Shape4 is = x.shape();
  const std::size_t plane = is.plane();
  Tensor<T> y({is.n, is.c * times, is.h, is.w});
  const Tensor<T>& xv = x.value();
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* src = xv.ptr() + (n * is.c + c) * plane;
      for (std::size_t r = 0; r < times; ++r) {
        std::copy(src, src + plane, y.ptr() + ((n * is.c + c) * times + r) * plane);
      }
    }
  }
  return t.record(std::move(y), {x}, [x, times, is, plane](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T> gx(is);
    for (std::size_t n = 0; n < is.n; ++n) {
      for (std::size_t c = 0; c < is.c; ++c) {
        T* dst = gx.ptr() + (n * is.c + c) * plane;
        for (std::size_t r = 0; r < times; ++r) {
          const T* src = g.ptr() + ((n * is.c + c) * times + r) * plane;
          for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
      }
    }
    t.accumulate(x, std::move(gx));
  });
}

#define ECN_INSTANTIATE(T)                                                                     \
  template Var<T> conv2d<T>(Var<T>, Var<T>, const Var<T>*, const Conv2dParams&);               \
  template Var<T> maxpool2d<T>(Var<T>, std::size_t, std::size_t, std::size_t);                 \
  template Var<T> avgpool2d<T>(Var<T>, std::size_t, std::size_t);                              \
  template Var<T> upsample_nearest2x<T>(Var<T>);                                               \
  template Var<T> global_avgpool<T>(Var<T>);                                                   \
  template Var<T> batchnorm<T>(Var<T>, Var<T>, Var<T>, RunningStats<T>, Mode, T, T);           \
  template Var<T> relu<T>(Var<T>);                                                             \
  template Var<T> sigmoid<T>(Var<T>);                                                          \
  template Var<T> silu<T>(Var<T>);                                                             \
  template Var<T> softmax<T>(Var<T>, unsigned);                                                \
  template Var<T> add<T>(Var<T>, Var<T>);                                                      \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                      \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                      \
  template Var<T> scale<T>(Var<T>, T);                                                         \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                              \
  template Var<T> slice_channels<T>(Var<T>, std::size_t, std::size_t);                         \
  template Var<T> repeat_channels<T>(Var<T>, std::size_t);                                     \
  template Var<T> dense<T>(Var<T>, Var<T>, const Var<T>*);                                     \
  template Var<T> layernorm<T>(Var<T>, Var<T>, Var<T>, T);                                     \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                   \
  template Var<T> permute<T>(Var<T>, const std::array<int, 4>&);                               \
  template Var<T> reshape<T>(Var<T>, Shape4);                                                  \
  template Var<T> unfold<T>(Var<T>, std::size_t, std::size_t);                                 \
  template Var<T> fold<T>(Var<T>, std::size_t, std::size_t, std::size_t, std::size_t);         \
  template Var<T> sum<T>(Var<T>);

ECN_INSTANTIATE(float)
ECN_INSTANTIATE(double)

#undef ECN_INSTANTIATE

}  // namespace ecn::ops
