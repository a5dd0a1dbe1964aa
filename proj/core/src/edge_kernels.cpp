#include "ecn/edge_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ecn {
namespace {

void check_config(double sigma, std::size_t size) {
  if (!(sigma > 0.0)) throw ConfigError("edge kernel: sigma must be > 0");
  if (size != 3) throw ConfigError("edge kernel: only 3x3 kernels are supported");
}

double quantize(double v) {
  constexpr double kUnit = 1.0 / 1048576.0;  // 2^-20
  return std::round(v / kUnit) * kUnit;
}

}  // namespace

Kernel3x3 gaussian_kernel(double sigma, std::size_t size) {
  check_config(sigma, size);
  Kernel3x3 k{};
  double total = 0.0;
  for (int y = -1; y <= 1; ++y) {
    for (int x = -1; x <= 1; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((y + 1) * 3 + (x + 1))] = v;
      total += v;
    }
  }
  for (double& v : k) v /= total;
  return k;
}

Kernel3x3 log_kernel(double sigma, std::size_t size) {
  check_config(sigma, size);
  Kernel3x3 k{};
  const double s2 = sigma * sigma;
  const double front = -1.0 / (std::numbers::pi * s2 * s2);
  double mean = 0.0;
  for (int y = -1; y <= 1; ++y) {
    for (int x = -1; x <= 1; ++x) {
      const double r2 = static_cast<double>(x * x + y * y);
      const double v = front * (1.0 - r2 / (2.0 * s2)) * std::exp(-r2 / (2.0 * s2));
      k[static_cast<std::size_t>((y + 1) * 3 + (x + 1))] = v;
      mean += v / 9.0;
    }
  }
  double rest = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    if (i == 4) continue;
    k[i] = quantize(k[i] - mean);
    rest += k[i];
  }
  k[4] = -rest;
  return k;
}

Kernel3x3 dog_stencil(double sigma) {
  Kernel3x3 k = gaussian_kernel(sigma);
  for (double& v : k) v = -v;
  return k;
}

template <typename T>
Tensor<T> stencil_forward(const Tensor<T>& x, const Kernel3x3& kernel) {
  const Shape4& s = x.shape();
  Tensor<T> y(s);
  T kk[9];
  for (std::size_t i = 0; i < 9; ++i) kk[i] = static_cast<T>(kernel[i]);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(s.h);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(s.w);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x.ptr() + nc * s.plane();
    T* dst = y.ptr() + nc * s.plane();
    for (std::ptrdiff_t i = 0; i < h; ++i) {
      for (std::ptrdiff_t j = 0; j < w; ++j) {
        const T center = src[i * w + j];
        T acc = T(0);
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
          const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(i + dy, 0, h - 1);
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(j + dx, 0, w - 1);
            acc += kk[(dy + 1) * 3 + (dx + 1)] * (src[yy * w + xx] - center);
          }
        }
        dst[i * w + j] = acc;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> stencil_backward(const Tensor<T>& gy, const Kernel3x3& kernel) {
  const Shape4& s = gy.shape();
  Tensor<T> gx(s);
  T kk[9];
  T ksum = T(0);
  for (std::size_t i = 0; i < 9; ++i) {
    kk[i] = static_cast<T>(kernel[i]);
    ksum += kk[i];
  }
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(s.h);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(s.w);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* g = gy.ptr() + nc * s.plane();
    T* dst = gx.ptr() + nc * s.plane();
    for (std::ptrdiff_t i = 0; i < h; ++i) {
      for (std::ptrdiff_t j = 0; j < w; ++j) {
        const T gv = g[i * w + j];
        dst[i * w + j] -= ksum * gv;
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
          const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(i + dy, 0, h - 1);
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(j + dx, 0, w - 1);
            dst[yy * w + xx] += kk[(dy + 1) * 3 + (dx + 1)] * gv;
          }
        }
      }
    }
  }
  return gx;
}

namespace ops {

template <typename T>
Var<T> edge_stencil(Var<T> x, const Kernel3x3& kernel) {
  Tape<T>& t = x.tape();
  return t.record(stencil_forward(x.value(), kernel), {x}, [x, kernel](Tape<T>& t, std::size_t self) {
    t.accumulate(x, stencil_backward(t.grad(self), kernel));
  });
}

template Var<float> edge_stencil<float>(Var<float>, const Kernel3x3&);
template Var<double> edge_stencil<double>(Var<double>, const Kernel3x3&);

}  // namespace ops

template Tensor<float> stencil_forward<float>(const Tensor<float>&, const Kernel3x3&);
template Tensor<double> stencil_forward<double>(const Tensor<double>&, const Kernel3x3&);
template Tensor<float> stencil_backward<float>(const Tensor<float>&, const Kernel3x3&);
template Tensor<double> stencil_backward<double>(const Tensor<double>&, const Kernel3x3&);

}  // namespace ecn
