#include "ecn/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <utility>
#include <vector>

#include "ecn/errors.hpp"
#include "ecn/kv_text.hpp"

namespace ecn {

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.p_flip = c.p_rotate = c.p_color = c.p_blur = c.p_shift_scale_rotate = c.p_noise = c.p_invert = 0.0;
  return c;
}

namespace {

using Field = std::pair<std::string_view, double AugmentConfig::*>;

constexpr Field kFields[] = {
    {"p_flip", &AugmentConfig::p_flip},
    {"p_rotate", &AugmentConfig::p_rotate},
    {"p_color", &AugmentConfig::p_color},
    {"p_blur", &AugmentConfig::p_blur},
    {"p_shift_scale_rotate", &AugmentConfig::p_shift_scale_rotate},
    {"p_noise", &AugmentConfig::p_noise},
    {"p_invert", &AugmentConfig::p_invert},
    {"rotate_deg", &AugmentConfig::rotate_deg},
    {"contrast", &AugmentConfig::contrast},
    {"brightness", &AugmentConfig::brightness},
    {"blur_sigma_min", &AugmentConfig::blur_sigma_min},
    {"blur_sigma_max", &AugmentConfig::blur_sigma_max},
    {"shift", &AugmentConfig::shift},
    {"scale", &AugmentConfig::scale},
    {"ssr_rotate_deg", &AugmentConfig::ssr_rotate_deg},
    {"noise_sigma_min", &AugmentConfig::noise_sigma_min},
    {"noise_sigma_max", &AugmentConfig::noise_sigma_max},
};

}  // namespace

AugmentConfig parse_augment_config(std::string_view text) {
  std::vector<KvSection> sections = parse_kv_text(text);
  if (sections.size() != 1 || sections[0].name() != "augment") {
    throw ParseError(sections.empty() ? 1 : sections[0].line(), "expected a single [augment] section");
  }
  const KvSection& sec = sections[0];
  std::vector<std::string_view> allowed;
  for (const Field& f : kFields) allowed.push_back(f.first);
  sec.reject_unknown(allowed);
  AugmentConfig cfg;
  for (const Field& f : kFields) cfg.*f.second = sec.get_double(f.first, cfg.*f.second);
  cfg.validate();
  return cfg;
}

AugmentConfig load_augment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_augment_config(ss.str());
}

std::string to_text(const AugmentConfig& cfg) {
  std::string out = "[augment]\n";
  for (const Field& f : kFields) {
    out += std::string(f.first) + " = " + format_double(cfg.*f.second) + "\n";
  }
  return out;
}

void AugmentConfig::validate() const {
  for (double p : {p_flip, p_rotate, p_color, p_blur, p_shift_scale_rotate, p_noise, p_invert}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augment: probabilities must lie in [0, 1]");
  }
  if (blur_sigma_min <= 0.0 || blur_sigma_max < blur_sigma_min) throw ConfigError("augment: bad blur range");
  if (noise_sigma_min < 0.0 || noise_sigma_max < noise_sigma_min) throw ConfigError("augment: bad noise range");
  if (scale < 0.0 || scale >= 1.0) throw ConfigError("augment: scale jitter must be in [0, 1)");
  if (contrast < 0.0 || brightness < 0.0 || shift < 0.0 || rotate_deg < 0.0 || ssr_rotate_deg < 0.0) {
    throw ConfigError("augment: magnitudes must be >= 0");
  }
}

Tensor4 flip_horizontal(const Tensor4& x) {
  const Shape4& s = x.shape();
  Tensor4 out(s);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    for (std::size_t y = 0; y < s.h; ++y) {
      const float* src = x.ptr() + (plane * s.h + y) * s.w;
      float* dst = out.ptr() + (plane * s.h + y) * s.w;
      std::reverse_copy(src, src + s.w, dst);
    }
  }
  return out;
}

Tensor4 flip_vertical(const Tensor4& x) {
  const Shape4& s = x.shape();
  Tensor4 out(s);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    for (std::size_t y = 0; y < s.h; ++y) {
      const float* src = x.ptr() + (plane * s.h + y) * s.w;
      std::copy(src, src + s.w, out.ptr() + (plane * s.h + (s.h - 1 - y)) * s.w);
    }
  }
  return out;
}

Affine inverse_similarity(std::size_t height, std::size_t width, double angle_deg, double scale,
                          double shift_x, double shift_y) {
  // Forward p' = scale * R * (p - c) + c + t with R = [[cos, sin], [-sin, cos]] in
  // y-down pixel coordinates; the inverse applies R^T / scale to p' - c - t.
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cs = std::cos(a) / scale;
  const double sn = std::sin(a) / scale;
  const double ox = cx + shift_x;
  const double oy = cy + shift_y;
  return {cs, -sn, cx - cs * ox + sn * oy, sn, cs, cy - sn * ox - cs * oy};
}

namespace {

std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor4 warp_affine(const Tensor4& x, const Affine& m, Sampling mode) {
  const Shape4& s = x.shape();
  Tensor4 out(s);
  const auto h = static_cast<std::ptrdiff_t>(s.h);
  const auto w = static_cast<std::ptrdiff_t>(s.w);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const float* src = x.ptr() + plane * s.plane();
    float* dst = out.ptr() + plane * s.plane();
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xo = 0; xo < w; ++xo) {
        const double sx = m[0] * xo + m[1] * y + m[2];
        const double sy = m[3] * xo + m[4] * y + m[5];
        float v = 0.0f;
        if (mode == Sampling::nearest_zero) {
          const auto ix = static_cast<std::ptrdiff_t>(std::lround(sx));
          const auto iy = static_cast<std::ptrdiff_t>(std::lround(sy));
          if (ix >= 0 && ix < w && iy >= 0 && iy < h) v = src[iy * w + ix];
        } else {
          const double fx = std::floor(sx);
          const double fy = std::floor(sy);
          const double ax = sx - fx;
          const double ay = sy - fy;
          const auto x0 = static_cast<std::ptrdiff_t>(fx);
          const auto y0 = static_cast<std::ptrdiff_t>(fy);
          const std::ptrdiff_t xa = reflect(x0, w), xb = reflect(x0 + 1, w);
          const std::ptrdiff_t ya = reflect(y0, h), yb = reflect(y0 + 1, h);
          const double top = src[ya * w + xa] * (1 - ax) + src[ya * w + xb] * ax;
          const double bot = src[yb * w + xa] * (1 - ax) + src[yb * w + xb] * ax;
          v = static_cast<float>(top * (1 - ay) + bot * ay);
        }
        dst[y * w + xo] = v;
      }
    }
  }
  return out;
}

Tensor4 gaussian_blur(const Tensor4& x, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_blur: sigma must be > 0");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= total;

  const Shape4& s = x.shape();
  const auto h = static_cast<std::ptrdiff_t>(s.h);
  const auto w = static_cast<std::ptrdiff_t>(s.w);
  Tensor4 tmp(s);
  Tensor4 out(s);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const float* src = x.ptr() + plane * s.plane();
    float* mid = tmp.ptr() + plane * s.plane();
    float* dst = out.ptr() + plane * s.plane();
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xo = 0; xo < w; ++xo) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * src[y * w + reflect(xo + i, w)];
        }
        mid[y * w + xo] = static_cast<float>(acc);
      }
    }
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xo = 0; xo < w; ++xo) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * mid[reflect(y + i, h) * w + xo];
        }
        dst[y * w + xo] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng, AugmentTrace* trace) {
  cfg.validate();
  AugmentTrace t;
  Sample out = sample;
  const Shape4& s = sample.image.shape();

  // Every gate and magnitude is drawn unconditionally so the number of draws
  // per sample is fixed regardless of which transforms fire.
  const bool flip = rng.bernoulli(cfg.p_flip);
  const bool flip_h = rng.uniform() < 0.5;
  t.rotate = rng.bernoulli(cfg.p_rotate);
  const double angle = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg);
  t.color = rng.bernoulli(cfg.p_color);
  const double alpha = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double beta = rng.uniform(-cfg.brightness, cfg.brightness);
  t.blur = rng.bernoulli(cfg.p_blur);
  const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  t.shift_scale_rotate = rng.bernoulli(cfg.p_shift_scale_rotate);
  const double dx = rng.uniform(-cfg.shift, cfg.shift) * static_cast<double>(s.w);
  const double dy = rng.uniform(-cfg.shift, cfg.shift) * static_cast<double>(s.h);
  const double sc = rng.uniform(1.0 - cfg.scale, 1.0 + cfg.scale);
  const double ssr_angle = rng.uniform(-cfg.ssr_rotate_deg, cfg.ssr_rotate_deg);
  t.noise = rng.bernoulli(cfg.p_noise);
  const double noise_sigma = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);
  const std::uint64_t noise_seed = rng.next();
  t.invert = rng.bernoulli(cfg.p_invert);

  if (flip) {
    t.hflip = flip_h;
    t.vflip = !flip_h;
    if (flip_h) {
      out.image = flip_horizontal(out.image);
      out.mask = flip_horizontal(out.mask);
    } else {
      out.image = flip_vertical(out.image);
      out.mask = flip_vertical(out.mask);
    }
  }
  if (t.rotate) {
    t.angle_deg = angle;
    const Affine m = inverse_similarity(s.h, s.w, angle, 1.0, 0.0, 0.0);
    out.image = warp_affine(out.image, m, Sampling::bilinear_reflect);
    out.mask = warp_affine(out.mask, m, Sampling::nearest_zero);
  }
  if (t.color) {
    t.alpha = alpha;
    t.beta = beta;
    for (std::size_t i = 0; i < out.image.numel(); ++i) {
      out.image[i] = static_cast<float>(alpha * out.image[i] + beta);
    }
  }
  if (t.blur) {
    t.blur_sigma = sigma;
    out.image = gaussian_blur(out.image, sigma);
  }
  if (t.shift_scale_rotate) {
    t.shift_x = dx;
    t.shift_y = dy;
    t.scale = sc;
    t.ssr_angle_deg = ssr_angle;
    const Affine m = inverse_similarity(s.h, s.w, ssr_angle, sc, dx, dy);
    out.image = warp_affine(out.image, m, Sampling::bilinear_reflect);
    out.mask = warp_affine(out.mask, m, Sampling::nearest_zero);
  }
  if (t.noise) {
    t.noise_sigma = noise_sigma;
    Rng noise(noise_seed);
    for (std::size_t i = 0; i < out.image.numel(); ++i) {
      out.image[i] = static_cast<float>(out.image[i] + noise_sigma * noise.normal());
    }
  }
  for (std::size_t i = 0; i < out.image.numel(); ++i) out.image[i] = std::clamp(out.image[i], 0.0f, 1.0f);
  if (t.invert) {
    for (std::size_t i = 0; i < out.image.numel(); ++i) out.image[i] = 1.0f - out.image[i];
  }
  if (trace != nullptr) *trace = t;
  return out;
}

}  // namespace ecn
