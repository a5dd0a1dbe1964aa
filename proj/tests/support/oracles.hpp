#pragma once

// Brute-force reference implementations used as test oracles, plus small
// helpers for building random tensors.

#include <cmath>
#include <cstddef>
#include <limits>

#include "ecn/kernels.hpp"
#include "ecn/rng.hpp"
#include "ecn/tensor.hpp"

namespace ecn::testing {

template <typename T>
Tensor<T> random_tensor(Shape4 shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor<T> random_tensor(Shape4 shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_tensor<T>(shape, rng, lo, hi);
}

/// Values with |x| >= margin, away from the ReLU kink.
template <typename T>
Tensor<T> random_away_from_zero(Shape4 shape, std::uint64_t seed, double margin = 0.1) {
  Rng rng(seed);
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    double v = rng.uniform(margin, 1.0);
    t[i] = static_cast<T>(rng.bernoulli(0.5) ? v : -v);
  }
  return t;
}

/// Direct six-loop convolution; taps in (ci, ky, kx) order, bias added last.
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, std::size_t stride,
                       std::size_t pad, std::size_t groups) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  const std::size_t k = ws.h;
  const std::size_t ho = (xs.h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (xs.w + 2 * pad - k) / stride + 1;
  const std::size_t cin_g = xs.c / groups;
  const std::size_t cout_g = ws.n / groups;
  Tensor<T> y({xs.n, ws.n, ho, wo});
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < ws.n; ++co) {
      const std::size_t g = co / cout_g;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T acc = T(0);
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w)) continue;
                acc += x.at(n, g * cin_g + ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       w.at(co, ci, ky, kx);
              }
            }
          }
          if (b != nullptr) acc += (*b)[co];
          y.at(n, co, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

/// Sliding-window maximum with -inf padding; first maximum wins.
template <typename T>
Tensor<T> naive_maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
  const Shape4 s = x.shape();
  const std::size_t ho = (s.h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (s.w + 2 * pad - k) / stride + 1;
  Tensor<T> y({s.n, s.c, ho, wo});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.h) || ix >= static_cast<long>(s.w)) continue;
              const T v = x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              if (v > best) best = v;
            }
          }
          y.at(n, c, oy, ox) = best;
        }
      }
    }
  }
  return y;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace ecn::testing
