#include "ecn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ecn::kernels {
namespace {

std::string num(std::size_t v) { return std::to_string(v); }

// Valid output-column range [lo, hi) for a tap at column offset `kx` so that
// ix = ox * stride + kx - padding stays inside [0, width).
struct Range {
  std::size_t lo;
  std::size_t hi;
};

Range valid_range(std::size_t out_len, std::size_t in_len, std::size_t stride, std::size_t k_off,
                  std::size_t padding) {
  // ix >= 0  <=>  ox * stride >= padding - k_off
  std::size_t lo = 0;
  if (padding > k_off) lo = (padding - k_off + stride - 1) / stride;
  // ix <= in_len - 1  <=>  ox * stride <= in_len - 1 + padding - k_off
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in_len) - 1 +
                             static_cast<std::ptrdiff_t>(padding) -
                             static_cast<std::ptrdiff_t>(k_off);
  std::size_t hi = 0;
  if (top >= 0) hi = std::min(out_len, static_cast<std::size_t>(top) / stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace

template <typename T>
T dot(const T* a, const T* b, std::size_t n) noexcept {
  T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// ---------------------------------------------------------------------------
// conv2d

Shape4 conv2d_output_shape(const Shape4& x, const Shape4& w, const Conv2dParams& p) {
  check_shape_valid(x, "conv2d");
  check_shape_valid(w, "conv2d");
  if (p.stride == 0) throw DimensionError("conv2d", "stride", "stride must be >= 1");
  if (p.groups == 0) throw DimensionError("conv2d", "groups", "groups must be >= 1");
  if (x.c % p.groups != 0) {
    throw DimensionError("conv2d", "c", "input channels " + num(x.c) +
                                            " not divisible by groups " + num(p.groups));
  }
  if (w.n % p.groups != 0) {
    throw DimensionError("conv2d", "c_out", "output channels " + num(w.n) +
                                                " not divisible by groups " + num(p.groups));
  }
  if (w.c != x.c / p.groups) {
    throw DimensionError("conv2d", "c", "weight expects " + num(w.c) +
                                            " input channels per group, input has " +
                                            num(x.c / p.groups));
  }
  if (w.h != w.w) throw DimensionError("conv2d", "k", "kernel must be square");
  if (x.h + 2 * p.padding < w.h) {
    throw DimensionError("conv2d", "h", "padded height " + num(x.h + 2 * p.padding) +
                                            " smaller than kernel " + num(w.h));
  }
  if (x.w + 2 * p.padding < w.w) {
    throw DimensionError("conv2d", "w", "padded width " + num(x.w + 2 * p.padding) +
                                            " smaller than kernel " + num(w.w));
  }
  return {x.n, w.n, (x.h + 2 * p.padding - w.h) / p.stride + 1,
          (x.w + 2 * p.padding - w.w) / p.stride + 1};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const std::type_identity_t<Tensor<T>>* bias,
                         const Conv2dParams& p) {
  const Shape4 os = conv2d_output_shape(x.shape(), w.shape(), p);
  const Shape4& is = x.shape();
  if (bias != nullptr && !(bias->shape() == Shape4{1, os.c, 1, 1})) {
    throw DimensionError("conv2d", "bias", "expected (1, " + num(os.c) + ", 1, 1), got " +
                                               bias->shape().str());
  }
  Tensor<T> y(os);
  const std::size_t k = w.shape().h;
  const std::size_t cin_g = w.shape().c;
  const std::size_t cout_g = os.c / p.groups;
  const std::size_t s = p.stride;
  const std::size_t pad = p.padding;
  const bool pointwise = k == 1 && s == 1 && pad == 0;

  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t co = 0; co < os.c; ++co) {
      const std::size_t grp = co / cout_g;
      T* acc = y.ptr() + y.offset(n, co, 0, 0);
      for (std::size_t cig = 0; cig < cin_g; ++cig) {
        const T* xp = x.ptr() + x.offset(n, grp * cin_g + cig, 0, 0);
        const T* wp = w.ptr() + w.offset(co, cig, 0, 0);
        if (pointwise) {
          const T wv = wp[0];
          const std::size_t plane = os.plane();
          for (std::size_t i = 0; i < plane; ++i) acc[i] += xp[i] * wv;
          continue;
        }
        for (std::size_t ky = 0; ky < k; ++ky) {
          const Range rows = valid_range(os.h, is.h, s, ky, pad);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const T wv = wp[ky * k + kx];
            const Range cols = valid_range(os.w, is.w, s, kx, pad);
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              const T* xr = xp + (oy * s + ky - pad) * is.w;
              T* orow = acc + oy * os.w;
              if (s == 1) {
                const T* xs = xr + kx - pad;
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += xs[ox] * wv;
              } else {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                  orow[ox] += xr[ox * s + kx - pad] * wv;
                }
              }
            }
          }
        }
      }
      if (bias != nullptr) {
        const T b = (*bias)[co];
        for (std::size_t i = 0; i < os.plane(); ++i) acc[i] += b;
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     const Conv2dParams& p, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const Shape4 os = conv2d_output_shape(x.shape(), w.shape(), p);
  if (!(gy.shape() == os)) throw DimensionError("conv2d_backward", "grad", gy.shape().str());
  const Shape4& is = x.shape();
  const std::size_t k = w.shape().h;
  const std::size_t cin_g = w.shape().c;
  const std::size_t cout_g = os.c / p.groups;
  const std::size_t s = p.stride;
  const std::size_t pad = p.padding;

  if (gb != nullptr) {
    *gb = Tensor<T>({1, os.c, 1, 1});
    for (std::size_t co = 0; co < os.c; ++co) {
      T acc = T(0);
      for (std::size_t n = 0; n < os.n; ++n) {
        const T* g = gy.ptr() + gy.offset(n, co, 0, 0);
        for (std::size_t i = 0; i < os.plane(); ++i) acc += g[i];
      }
      (*gb)[co] = acc;
    }
  }

  if (gx != nullptr) {
    *gx = Tensor<T>(is);
    for (std::size_t n = 0; n < is.n; ++n) {
      for (std::size_t co = 0; co < os.c; ++co) {
        const std::size_t grp = co / cout_g;
        const T* g = gy.ptr() + gy.offset(n, co, 0, 0);
        for (std::size_t cig = 0; cig < cin_g; ++cig) {
          T* gxp = gx->ptr() + gx->offset(n, grp * cin_g + cig, 0, 0);
          const T* wp = w.ptr() + w.offset(co, cig, 0, 0);
          for (std::size_t ky = 0; ky < k; ++ky) {
            const Range rows = valid_range(os.h, is.h, s, ky, pad);
            for (std::size_t kx = 0; kx < k; ++kx) {
              const T wv = wp[ky * k + kx];
              const Range cols = valid_range(os.w, is.w, s, kx, pad);
              for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                T* xr = gxp + (oy * s + ky - pad) * is.w;
                const T* grow = g + oy * os.w;
                if (s == 1) {
                  T* xs = xr + kx - pad;
                  for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) xs[ox] += grow[ox] * wv;
                } else {
                  for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                    xr[ox * s + kx - pad] += grow[ox] * wv;
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  if (gw != nullptr) {
    *gw = Tensor<T>(w.shape());
    for (std::size_t co = 0; co < os.c; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t cig = 0; cig < cin_g; ++cig) {
        T* gwp = gw->ptr() + gw->offset(co, cig, 0, 0);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const Range rows = valid_range(os.h, is.h, s, ky, pad);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const Range cols = valid_range(os.w, is.w, s, kx, pad);
            T acc = T(0);
            for (std::size_t n = 0; n < is.n; ++n) {
              const T* g = gy.ptr() + gy.offset(n, co, 0, 0);
              const T* xp = x.ptr() + x.offset(n, grp * cin_g + cig, 0, 0);
              if (k == 1 && s == 1 && pad == 0) {
                acc += dot(g, xp, os.plane());
                continue;
              }
              for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                const T* xr = xp + (oy * s + ky - pad) * is.w;
                const T* grow = g + oy * os.w;
                if (s == 1) {
                  acc += dot(grow + cols.lo, xr + cols.lo + kx - pad, cols.hi - cols.lo);
                } else {
                  T row = T(0);
                  for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                    row += grow[ox] * xr[ox * s + kx - pad];
                  }
                  acc += row;
                }
              }
            }
            gwp[ky * k + kx] = acc;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// pooling / resampling

template <typename T>
MaxPoolResult<T> maxpool2d_forward(const Tensor<T>& x, std::size_t k, std::size_t stride,
                                   std::size_t padding) {
  const Shape4& is = x.shape();
  if (k == 0) throw DimensionError("maxpool2d", "k", "kernel must be >= 1");
  if (stride == 0) throw DimensionError("maxpool2d", "stride", "stride must be >= 1");
  if (2 * padding > k) {
    throw DimensionError("maxpool2d", "padding", "padding " + num(padding) +
                                                     " exceeds half the window " + num(k));
  }
  if (is.h + 2 * padding < k) {
    throw DimensionError("maxpool2d", "h", "window " + num(k) + " larger than padded height " +
                                               num(is.h + 2 * padding));
  }
  if (is.w + 2 * padding < k) {
    throw DimensionError("maxpool2d", "w", "window " + num(k) + " larger than padded width " +
                                               num(is.w + 2 * padding));
  }
  const Shape4 os{is.n, is.c, (is.h + 2 * padding - k) / stride + 1,
                  (is.w + 2 * padding - k) / stride + 1};
  MaxPoolResult<T> r{Tensor<T>(os), std::vector<std::uint32_t>(os.numel())};
  std::size_t o = 0;
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const std::size_t base = x.offset(n, c, 0, 0);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                  static_cast<std::ptrdiff_t>(padding);
        const std::size_t ylo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(y0, 0));
        const std::size_t yhi =
            static_cast<std::size_t>(std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(k),
                                                              static_cast<std::ptrdiff_t>(is.h)));
        for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
          const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                    static_cast<std::ptrdiff_t>(padding);
          const std::size_t xlo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(x0, 0));
          const std::size_t xhi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
              x0 + static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(is.w)));
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = base + ylo * is.w + xlo;
          for (std::size_t iy = ylo; iy < yhi; ++iy) {
            for (std::size_t ix = xlo; ix < xhi; ++ix) {
              const std::size_t i = base + iy * is.w + ix;
              if (x[i] > best) {
                best = x[i];
                best_i = i;
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = static_cast<std::uint32_t>(best_i);
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape4& input_shape, const std::vector<std::uint32_t>& argmax,
                             const Tensor<T>& gy) {
  Tensor<T> gx(input_shape);
  for (std::size_t o = 0; o < gy.numel(); ++o) gx[argmax[o]] += gy[o];
  return gx;
}

template <typename T>
Tensor<T> avgpool2d_forward(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  const Shape4& is = x.shape();
  if (k == 0 || stride == 0) throw DimensionError("avgpool2d", "k", "kernel/stride must be >= 1");
  if (is.h < k) throw DimensionError("avgpool2d", "h", "window larger than input");
  if (is.w < k) throw DimensionError("avgpool2d", "w", "window larger than input");
  const Shape4 os{is.n, is.c, (is.h - k) / stride + 1, (is.w - k) / stride + 1};
  Tensor<T> y(os);
  const T inv = T(1) / static_cast<T>(k * k);
  std::size_t o = 0;
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
          T acc = T(0);
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              acc += x.at(n, c, oy * stride + ky, ox * stride + kx);
            }
          }
          y[o] = acc * inv;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avgpool2d_backward(const Shape4& is, std::size_t k, std::size_t stride,
                             const Tensor<T>& gy) {
  Tensor<T> gx(is);
  const Shape4& os = gy.shape();
  const T inv = T(1) / static_cast<T>(k * k);
  std::size_t o = 0;
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t c = 0; c < os.c; ++c) {
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
          const T g = gy[o] * inv;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) gx.at(n, c, oy * stride + ky, ox * stride + kx) += g;
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> upsample_nearest2x_forward(const Tensor<T>& x) {
  const Shape4& is = x.shape();
  const Shape4 os{is.n, is.c, is.h * 2, is.w * 2};
  Tensor<T> y(os);
  for (std::size_t nc = 0; nc < is.n * is.c; ++nc) {
    const T* src = x.ptr() + nc * is.plane();
    T* dst = y.ptr() + nc * os.plane();
    for (std::size_t iy = 0; iy < is.h; ++iy) {
      T* r0 = dst + (2 * iy) * os.w;
      T* r1 = r0 + os.w;
      for (std::size_t ix = 0; ix < is.w; ++ix) {
        const T v = src[iy * is.w + ix];
        r0[2 * ix] = v;
        r0[2 * ix + 1] = v;
        r1[2 * ix] = v;
        r1[2 * ix + 1] = v;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& gy) {
  const Shape4& os = gy.shape();
  const Shape4 is{os.n, os.c, os.h / 2, os.w / 2};
  Tensor<T> gx(is);
  for (std::size_t nc = 0; nc < is.n * is.c; ++nc) {
    const T* src = gy.ptr() + nc * os.plane();
    T* dst = gx.ptr() + nc * is.plane();
    for (std::size_t iy = 0; iy < is.h; ++iy) {
      const T* r0 = src + (2 * iy) * os.w;
      const T* r1 = r0 + os.w;
      for (std::size_t ix = 0; ix < is.w; ++ix) {
        dst[iy * is.w + ix] = (r0[2 * ix] + r0[2 * ix + 1]) + (r1[2 * ix] + r1[2 * ix + 1]);
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
  const Shape4& is = x.shape();
  Tensor<T> y({is.n, is.c, 1, 1});
  const T inv = T(1) / static_cast<T>(is.plane());
  for (std::size_t nc = 0; nc < is.n * is.c; ++nc) {
    const T* p = x.ptr() + nc * is.plane();
    T acc = T(0);
    for (std::size_t i = 0; i < is.plane(); ++i) acc += p[i];
    y[nc] = acc * inv;
  }
  return y;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Shape4& is, const Tensor<T>& gy) {
  Tensor<T> gx(is);
  const T inv = T(1) / static_cast<T>(is.plane());
  for (std::size_t nc = 0; nc < is.n * is.c; ++nc) {
    const T g = gy[nc] * inv;
    T* p = gx.ptr() + nc * is.plane();
    for (std::size_t i = 0; i < is.plane(); ++i) p[i] = g;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// activations

namespace {

// Enumerates flat offsets of the kept ("outer") and reduced ("inner") index
// combinations of a softmax over `axes`.
struct AxisSplit {
  std::vector<std::size_t> outer;
  std::vector<std::size_t> inner;
};

AxisSplit split_axes(const Shape4& s, unsigned axes) {
  if (axes == 0 || axes > 7) throw DimensionError("softmax", "axes", "axes must be a nonempty subset of {c,h,w}");
  const std::size_t dims[4] = {s.n, s.c, s.h, s.w};
  const std::size_t strides[4] = {s.c * s.h * s.w, s.h * s.w, s.w, 1};
  const bool reduced[4] = {false, (axes & kAxisC) != 0, (axes & kAxisH) != 0, (axes & kAxisW) != 0};
  AxisSplit out{{0}, {0}};
  for (int a = 0; a < 4; ++a) {
    auto& list = reduced[a] ? out.inner : out.outer;
    std::vector<std::size_t> next;
    next.reserve(list.size() * dims[a]);
    for (std::size_t base : list) {
      for (std::size_t i = 0; i < dims[a]; ++i) next.push_back(base + i * strides[a]);
    }
    list = std::move(next);
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& x, unsigned axes) {
  const AxisSplit sp = split_axes(x.shape(), axes);
  Tensor<T> y(x.shape());
  for (std::size_t base : sp.outer) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t off : sp.inner) mx = std::max(mx, x[base + off]);
    T sum = T(0);
    for (std::size_t off : sp.inner) {
      const T e = std::exp(x[base + off] - mx);
      y[base + off] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (std::size_t off : sp.inner) y[base + off] *= inv;
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& gy, unsigned axes) {
  const AxisSplit sp = split_axes(y.shape(), axes);
  Tensor<T> gx(y.shape());
  for (std::size_t base : sp.outer) {
    T s = T(0);
    for (std::size_t off : sp.inner) s += gy[base + off] * y[base + off];
    for (std::size_t off : sp.inner) gx[base + off] = y[base + off] * (gy[base + off] - s);
  }
  return gx;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// elementwise

Broadcast broadcast_kind(const Shape4& a, const Shape4& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::per_channel;
  if (b.n == 1 && b.c == a.c && b.h == a.h && b.w == a.w) return Broadcast::per_map;
  std::string axis = "c";
  if (b.c == a.c) axis = b.n != a.n && b.n != 1 ? "n" : (b.h != a.h ? "h" : "w");
  throw DimensionError(op, axis, "cannot broadcast " + b.str() + " onto " + a.str());
}

namespace {

template <typename T>
T apply(BinaryOp op, T a, T b) {
  switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
  }
  return T(0);
}

}  // namespace

template <typename T>
Tensor<T> binary_forward(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const char* name = op == BinaryOp::add ? "add" : (op == BinaryOp::sub ? "sub" : "mul");
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), name);
  const Shape4& s = a.shape();
  Tensor<T> y(s);
  switch (kind) {
    case Broadcast::same:
      for (std::size_t i = 0; i < a.numel(); ++i) y[i] = apply(op, a[i], b[i]);
      break;
    case Broadcast::per_channel:
      for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const T bv = b[nc];
        const std::size_t o = nc * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) y[o + i] = apply(op, a[o + i], bv);
      }
      break;
    case Broadcast::per_map: {
      const std::size_t chw = s.c * s.plane();
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t o = n * chw;
        for (std::size_t i = 0; i < chw; ++i) y[o + i] = apply(op, a[o + i], b[i]);
      }
      break;
    }
  }
  return y;
}

template <typename T>
Tensor<T> reduce_to_broadcast(const Tensor<T>& full, const Shape4& bs, Broadcast kind) {
  const Shape4& s = full.shape();
  switch (kind) {
    case Broadcast::same:
      return full;
    case Broadcast::per_channel: {
      Tensor<T> r(bs);
      for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* p = full.ptr() + nc * s.plane();
        T acc = T(0);
        for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
        r[nc] = acc;
      }
      return r;
    }
    case Broadcast::per_map: {
      Tensor<T> r(bs);
      const std::size_t chw = s.c * s.plane();
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = full.ptr() + n * chw;
        for (std::size_t i = 0; i < chw; ++i) r[i] += p[i];
      }
      return r;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// dense / matmul

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const std::type_identity_t<Tensor<T>>* bias) {
  const Shape4& xs = x.shape();
  const Shape4& ws = w.shape();
  if (ws.n != 1 || ws.c != 1) throw DimensionError("dense", "weight", "expected (1, 1, d_in, d_out), got " + ws.str());
  if (xs.w != ws.h) {
    throw DimensionError("dense", "w", "input features " + num(xs.w) + " != weight rows " + num(ws.h));
  }
  const std::size_t din = ws.h;
  const std::size_t dout = ws.w;
  if (bias != nullptr && !(bias->shape() == Shape4{1, 1, 1, dout})) {
    throw DimensionError("dense", "bias", "expected (1, 1, 1, " + num(dout) + "), got " + bias->shape().str());
  }
  const std::size_t rows = xs.n * xs.c * xs.h;
  Tensor<T> y({xs.n, xs.c, xs.h, dout});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * din;
    T* yr = y.ptr() + r * dout;
    for (std::size_t p = 0; p < din; ++p) {
      const T xv = xr[p];
      const T* wr = w.ptr() + p * dout;
      for (std::size_t j = 0; j < dout; ++j) yr[j] += xv * wr[j];
    }
    if (bias != nullptr) {
      for (std::size_t j = 0; j < dout; ++j) yr[j] += (*bias)[j];
    }
  }
  return y;
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, Tensor<T>* gx,
                    Tensor<T>* gw, Tensor<T>* gb) {
  const Shape4& xs = x.shape();
  const std::size_t din = w.shape().h;
  const std::size_t dout = w.shape().w;
  const std::size_t rows = xs.n * xs.c * xs.h;
  if (gx != nullptr) {
    *gx = Tensor<T>(xs);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = gy.ptr() + r * dout;
      T* out = gx->ptr() + r * din;
      for (std::size_t p = 0; p < din; ++p) out[p] = dot(g, w.ptr() + p * dout, dout);
    }
  }
  if (gw != nullptr) {
    *gw = Tensor<T>(w.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x.ptr() + r * din;
      const T* g = gy.ptr() + r * dout;
      for (std::size_t p = 0; p < din; ++p) {
        const T xv = xr[p];
        T* wr = gw->ptr() + p * dout;
        for (std::size_t j = 0; j < dout; ++j) wr[j] += xv * g[j];
      }
    }
  }
  if (gb != nullptr) {
    *gb = Tensor<T>({1, 1, 1, dout});
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = gy.ptr() + r * dout;
      for (std::size_t j = 0; j < dout; ++j) (*gb)[j] += g[j];
    }
  }
}

template <typename T>
Tensor<T> matmul_forward(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape4& as = a.shape();
  const Shape4& bs = b.shape();
  if (as.n != bs.n) throw DimensionError("matmul", "n", as.str() + " x " + bs.str());
  if (as.c != bs.c) throw DimensionError("matmul", "c", as.str() + " x " + bs.str());
  if (as.w != bs.h) throw DimensionError("matmul", "w", "inner dims " + num(as.w) + " != " + num(bs.h));
  const std::size_t t = as.h, kk = as.w, m = bs.w;
  Tensor<T> y({as.n, as.c, t, m});
  for (std::size_t bc = 0; bc < as.n * as.c; ++bc) {
    const T* ap = a.ptr() + bc * t * kk;
    const T* bp = b.ptr() + bc * kk * m;
    T* yp = y.ptr() + bc * t * m;
    for (std::size_t i = 0; i < t; ++i) {
      T* yr = yp + i * m;
      for (std::size_t p = 0; p < kk; ++p) {
        const T av = ap[i * kk + p];
        const T* br = bp + p * m;
        for (std::size_t j = 0; j < m; ++j) yr[j] += av * br[j];
      }
    }
  }
  return y;
}

template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& gy, Tensor<T>* ga,
                     Tensor<T>* gb) {
  const Shape4& as = a.shape();
  const std::size_t t = as.h, kk = as.w, m = b.shape().w;
  if (ga != nullptr) *ga = Tensor<T>(as);
  if (gb != nullptr) *gb = Tensor<T>(b.shape());
  for (std::size_t bc = 0; bc < as.n * as.c; ++bc) {
    const T* ap = a.ptr() + bc * t * kk;
    const T* bp = b.ptr() + bc * kk * m;
    const T* gp = gy.ptr() + bc * t * m;
    if (ga != nullptr) {
      T* gap = ga->ptr() + bc * t * kk;
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t p = 0; p < kk; ++p) gap[i * kk + p] = dot(gp + i * m, bp + p * m, m);
      }
    }
    if (gb != nullptr) {
      T* gbp = gb->ptr() + bc * kk * m;
      for (std::size_t i = 0; i < t; ++i) {
        const T* gr = gp + i * m;
        for (std::size_t p = 0; p < kk; ++p) {
          const T av = ap[i * kk + p];
          T* out = gbp + p * m;
          for (std::size_t j = 0; j < m; ++j) out[j] += av * gr[j];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// layout

std::array<int, 4> inverse_permutation(const std::array<int, 4>& perm) {
  std::array<int, 4> inv{};
  for (int i = 0; i < 4; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  return inv;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::array<int, 4>& perm) {
  bool seen[4] = {false, false, false, false};
  for (int p : perm) {
    if (p < 0 || p > 3 || seen[p]) throw DimensionError("permute", "perm", "not a permutation of 0..3");
    seen[p] = true;
  }
  const Shape4& s = x.shape();
  const std::size_t in_dims[4] = {s.n, s.c, s.h, s.w};
  const std::size_t in_strides[4] = {s.c * s.h * s.w, s.h * s.w, s.w, 1};
  std::size_t od[4], st[4];
  for (int i = 0; i < 4; ++i) {
    od[i] = in_dims[perm[static_cast<std::size_t>(i)]];
    st[i] = in_strides[perm[static_cast<std::size_t>(i)]];
  }
  Tensor<T> y({od[0], od[1], od[2], od[3]});
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < od[0]; ++i0) {
    for (std::size_t i1 = 0; i1 < od[1]; ++i1) {
      for (std::size_t i2 = 0; i2 < od[2]; ++i2) {
        const std::size_t base = i0 * st[0] + i1 * st[1] + i2 * st[2];
        for (std::size_t i3 = 0; i3 < od[3]; ++i3) y[o++] = x[base + i3 * st[3]];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> unfold_patches(const Tensor<T>& x, std::size_t ph, std::size_t pw) {
  const Shape4& s = x.shape();
  if (ph == 0 || s.h % ph != 0) throw DimensionError("unfold", "h", "patch height " + num(ph) + " does not divide " + num(s.h));
  if (pw == 0 || s.w % pw != 0) throw DimensionError("unfold", "w", "patch width " + num(pw) + " does not divide " + num(s.w));
  const std::size_t gh = s.h / ph, gw = s.w / pw;
  const std::size_t P = ph * pw, N = gh * gw, d = s.c;
  Tensor<T> y({s.n, P, N, d});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t yy = 0; yy < s.h; ++yy) {
        for (std::size_t xx = 0; xx < s.w; ++xx) {
          const std::size_t p = (yy % ph) * pw + (xx % pw);
          const std::size_t q = (yy / ph) * gw + (xx / pw);
          y.at(n, p, q, c) = x.at(n, c, yy, xx);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> fold_patches(const Tensor<T>& x, std::size_t ph, std::size_t pw, std::size_t height,
                       std::size_t width) {
  const Shape4& s = x.shape();
  if (ph == 0 || height % ph != 0) throw DimensionError("fold", "h", "patch height does not divide " + num(height));
  if (pw == 0 || width % pw != 0) throw DimensionError("fold", "w", "patch width does not divide " + num(width));
  const std::size_t gw = width / pw;
  if (s.c != ph * pw) throw DimensionError("fold", "c", "expected P = " + num(ph * pw) + " got " + num(s.c));
  if (s.h != (height / ph) * gw) throw DimensionError("fold", "h", "patch count mismatch");
  Tensor<T> y({s.n, s.w, height, width});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.w; ++c) {
      for (std::size_t yy = 0; yy < height; ++yy) {
        for (std::size_t xx = 0; xx < width; ++xx) {
          const std::size_t p = (yy % ph) * pw + (xx % pw);
          const std::size_t q = (yy / ph) * gw + (xx / pw);
          y.at(n, c, yy, xx) = x.at(n, p, q, c);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels", "c", "no inputs");
  const Shape4& s0 = inputs.front()->shape();
  std::size_t total = 0;
  for (const Tensor<T>* t : inputs) {
    const Shape4& s = t->shape();
    if (s.n != s0.n) throw DimensionError("concat_channels", "n", s.str() + " vs " + s0.str());
    if (s.h != s0.h) throw DimensionError("concat_channels", "h", s.str() + " vs " + s0.str());
    if (s.w != s0.w) throw DimensionError("concat_channels", "w", s.str() + " vs " + s0.str());
    total += s.c;
  }
  Tensor<T> y({s0.n, total, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  for (std::size_t n = 0; n < s0.n; ++n) {
    T* dst = y.ptr() + y.offset(n, 0, 0, 0);
    for (const Tensor<T>* t : inputs) {
      const std::size_t len = t->shape().c * plane;
      const T* src = t->ptr() + t->offset(n, 0, 0, 0);
      std::copy(src, src + len, dst);
      dst += len;
    }
  }
  return y;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t start, std::size_t count) {
  const Shape4& s = x.shape();
  if (count == 0 || start + count > s.c) {
    throw DimensionError("slice_channels", "c", "range [" + num(start) + ", " + num(start + count) +
                                                    ") outside " + num(s.c) + " channels");
  }
  Tensor<T> y({s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = x.ptr() + x.offset(n, start, 0, 0);
    std::copy(src, src + count * s.plane(), y.ptr() + y.offset(n, 0, 0, 0));
  }
  return y;
}

// ---------------------------------------------------------------------------
// normalization

void check_norm_params(const Shape4& x, const Shape4& gamma, const Shape4& beta, bool per_channel,
                       const char* op) {
  const Shape4 want = per_channel ? Shape4{1, x.c, 1, 1} : Shape4{1, 1, 1, x.w};
  if (!(gamma == want)) {
    throw DimensionError(op, per_channel ? "c" : "w", "gamma " + gamma.str() + " expected " + want.str());
  }
  if (!(beta == want)) {
    throw DimensionError(op, per_channel ? "c" : "w", "beta " + beta.str() + " expected " + want.str());
  }
}

template <typename T>
NormSaved<T> batchnorm_train_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, T eps) {
  const Shape4& s = x.shape();
  check_norm_params(s, gamma.shape(), beta.shape(), true, "batchnorm");
  const std::size_t m = s.n * s.plane();
  if (m < 2) throw DimensionError("batchnorm", "n", "train mode needs >= 2 values per channel");
  NormSaved<T> r{Tensor<T>(s), Tensor<T>(s), std::vector<T>(s.c), std::vector<T>(s.c),
                 std::vector<T>(s.c)};
  const T inv_m = T(1) / static_cast<T>(m);
  for (std::size_t c = 0; c < s.c; ++c) {
    T sum = T(0);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.ptr() + x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
    }
    const T mean = sum * inv_m;
    T sq = T(0);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.ptr() + x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T d = p[i] - mean;
        sq += d * d;
      }
    }
    const T var = sq * inv_m;
    const T inv_std = T(1) / std::sqrt(var + eps);
    r.mean[c] = mean;
    r.variance[c] = var;
    r.inv_std[c] = inv_std;
    const T g = gamma[c], b = beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t o = x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T xh = (x[o + i] - mean) * inv_std;
        r.normalized[o + i] = xh;
        r.output[o + i] = g * xh + b;
      }
    }
  }
  return r;
}

template <typename T>
NormSaved<T> batchnorm_infer_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, const Tensor<T>& rm,
                                     const Tensor<T>& rv, T eps) {
  const Shape4& s = x.shape();
  check_norm_params(s, gamma.shape(), beta.shape(), true, "batchnorm");
  check_norm_params(s, rm.shape(), rv.shape(), true, "batchnorm");
  NormSaved<T> r{Tensor<T>(s), Tensor<T>(s), std::vector<T>(s.c), {}, {}};
  for (std::size_t c = 0; c < s.c; ++c) {
    const T mean = rm[c];
    const T inv_std = T(1) / std::sqrt(rv[c] + eps);
    r.inv_std[c] = inv_std;
    const T g = gamma[c], b = beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t o = x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T xh = (x[o + i] - mean) * inv_std;
        r.normalized[o + i] = xh;
        r.output[o + i] = g * xh + b;
      }
    }
  }
  return r;
}

template <typename T>
void batchnorm_backward(const NormSaved<T>& saved, const Tensor<T>& gamma, const Tensor<T>& gy,
                        bool train, Tensor<T>* gx, Tensor<T>* gg, Tensor<T>* gb) {
  const Shape4& s = gy.shape();
  const std::size_t m = s.n * s.plane();
  if (gx != nullptr) *gx = Tensor<T>(s);
  if (gg != nullptr) *gg = Tensor<T>({1, s.c, 1, 1});
  if (gb != nullptr) *gb = Tensor<T>({1, s.c, 1, 1});
  for (std::size_t c = 0; c < s.c; ++c) {
    T sum_g = T(0), sum_gx = T(0);
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t o = gy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_g += gy[o + i];
        sum_gx += gy[o + i] * saved.normalized[o + i];
      }
    }
    if (gg != nullptr) (*gg)[c] = sum_gx;
    if (gb != nullptr) (*gb)[c] = sum_g;
    if (gx == nullptr) continue;
    const T scale = gamma[c] * saved.inv_std[c];
    if (!train) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t o = gy.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < s.plane(); ++i) (*gx)[o + i] = gy[o + i] * scale;
      }
      continue;
    }
    const T inv_m = T(1) / static_cast<T>(m);
    const T mean_g = sum_g * inv_m;
    const T mean_gx = sum_gx * inv_m;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t o = gy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        (*gx)[o + i] = scale * (gy[o + i] - mean_g - saved.normalized[o + i] * mean_gx);
      }
    }
  }
}

template <typename T>
NormSaved<T> layernorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                               T eps) {
  const Shape4& s = x.shape();
  check_norm_params(s, gamma.shape(), beta.shape(), false, "layernorm");
  const std::size_t d = s.w;
  const std::size_t rows = s.n * s.c * s.h;
  NormSaved<T> r{Tensor<T>(s), Tensor<T>(s), std::vector<T>(rows), {}, {}};
  const T inv_d = T(1) / static_cast<T>(d);
  for (std::size_t row = 0; row < rows; ++row) {
    const T* p = x.ptr() + row * d;
    T sum = T(0);
    for (std::size_t j = 0; j < d; ++j) sum += p[j];
    const T mean = sum * inv_d;
    T sq = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T dv = p[j] - mean;
      sq += dv * dv;
    }
    const T inv_std = T(1) / std::sqrt(sq * inv_d + eps);
    r.inv_std[row] = inv_std;
    T* xh = r.normalized.ptr() + row * d;
    T* y = r.output.ptr() + row * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (p[j] - mean) * inv_std;
      y[j] = gamma[j] * xh[j] + beta[j];
    }
  }
  return r;
}

template <typename T>
void layernorm_backward(const NormSaved<T>& saved, const Tensor<T>& gamma, const Tensor<T>& gy,
                        Tensor<T>* gx, Tensor<T>* gg, Tensor<T>* gb) {
  const Shape4& s = gy.shape();
  const std::size_t d = s.w;
  const std::size_t rows = s.n * s.c * s.h;
  if (gx != nullptr) *gx = Tensor<T>(s);
  if (gg != nullptr) *gg = Tensor<T>({1, 1, 1, d});
  if (gb != nullptr) *gb = Tensor<T>({1, 1, 1, d});
  const T inv_d = T(1) / static_cast<T>(d);
  std::vector<T> gxh(d);
  for (std::size_t row = 0; row < rows; ++row) {
    const T* g = gy.ptr() + row * d;
    const T* xh = saved.normalized.ptr() + row * d;
    if (gg != nullptr) {
      for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g[j] * xh[j];
    }
    if (gb != nullptr) {
      for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g[j];
    }
    if (gx == nullptr) continue;
    T sum_g = T(0), sum_gx = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      gxh[j] = g[j] * gamma[j];
      sum_g += gxh[j];
      sum_gx += gxh[j] * xh[j];
    }
    const T mg = sum_g * inv_d, mgx = sum_gx * inv_d;
    T* out = gx->ptr() + row * d;
    for (std::size_t j = 0; j < d; ++j) out[j] = saved.inv_std[row] * (gxh[j] - mg - xh[j] * mgx);
  }
}

// ---------------------------------------------------------------------------

#define ECN_INSTANTIATE(T)                                                                      \
  template T dot<T>(const T*, const T*, std::size_t) noexcept;                                  \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,   \
                                       const Conv2dParams&);                                    \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                   const Conv2dParams&, Tensor<T>*, Tensor<T>*, Tensor<T>*);    \
  template MaxPoolResult<T> maxpool2d_forward<T>(const Tensor<T>&, std::size_t, std::size_t,   \
                                                 std::size_t);                                  \
  template Tensor<T> maxpool2d_backward<T>(const Shape4&, const std::vector<std::uint32_t>&,   \
                                           const Tensor<T>&);                                   \
  template Tensor<T> avgpool2d_forward<T>(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> avgpool2d_backward<T>(const Shape4&, std::size_t, std::size_t,            \
                                           const Tensor<T>&);                                   \
  template Tensor<T> upsample_nearest2x_forward<T>(const Tensor<T>&);                          \
  template Tensor<T> upsample_nearest2x_backward<T>(const Tensor<T>&);                         \
  template Tensor<T> global_avgpool_forward<T>(const Tensor<T>&);                              \
  template Tensor<T> global_avgpool_backward<T>(const Shape4&, const Tensor<T>&);              \
  template Tensor<T> softmax_forward<T>(const Tensor<T>&, unsigned);                           \
  template Tensor<T> softmax_backward<T>(const Tensor<T>&, const Tensor<T>&, unsigned);        \
  template Tensor<T> sigmoid_forward<T>(const Tensor<T>&);                                     \
  template Tensor<T> binary_forward<T>(BinaryOp, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> reduce_to_broadcast<T>(const Tensor<T>&, const Shape4&, Broadcast);       \
  template Tensor<T> dense_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);   \
  template void dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                  Tensor<T>*, Tensor<T>*, Tensor<T>*);                          \
  template Tensor<T> matmul_forward<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template void matmul_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                   Tensor<T>*, Tensor<T>*);                                     \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::array<int, 4>&);                  \
  template Tensor<T> unfold_patches<T>(const Tensor<T>&, std::size_t, std::size_t);            \
  template Tensor<T> fold_patches<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t,  \
                                     std::size_t);                                              \
  template Tensor<T> concat_channels<T>(const std::vector<const Tensor<T>*>&);                 \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::size_t, std::size_t);            \
  template NormSaved<T> batchnorm_train_forward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                   const Tensor<T>&, T);                        \
  template NormSaved<T> batchnorm_infer_forward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                   const Tensor<T>&, const Tensor<T>&,          \
                                                   const Tensor<T>&, T);                        \
  template void batchnorm_backward<T>(const NormSaved<T>&, const Tensor<T>&, const Tensor<T>&, \
                                      bool, Tensor<T>*, Tensor<T>*, Tensor<T>*);                \
  template NormSaved<T> layernorm_forward<T>(const Tensor<T>&, const Tensor<T>&,               \
                                             const Tensor<T>&, T);                              \
  template void layernorm_backward<T>(const NormSaved<T>&, const Tensor<T>&, const Tensor<T>&, \
                                      Tensor<T>*, Tensor<T>*, Tensor<T>*);

ECN_INSTANTIATE(float)
ECN_INSTANTIATE(double)

#undef ECN_INSTANTIATE

}  // namespace ecn::kernels
