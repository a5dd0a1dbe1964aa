#include "ecn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ecn/errors.hpp"
#include "ecn/rng.hpp"

namespace ecn {
namespace {

constexpr std::size_t kGrid = 5;

/// Bilinearly interpolated coarse random grid, values in [-1, 1].
std::vector<double> smooth_field(std::size_t size, Rng& rng) {
  std::vector<double> grid(kGrid * kGrid);
  for (double& v : grid) v = rng.uniform(-1.0, 1.0);
  std::vector<double> out(size * size);
  const double step = static_cast<double>(kGrid - 1) / static_cast<double>(size - 1);
  for (std::size_t y = 0; y < size; ++y) {
    const double gy = y * step;
    const std::size_t y0 = std::min(static_cast<std::size_t>(gy), kGrid - 2);
    const double ay = gy - y0;
    for (std::size_t x = 0; x < size; ++x) {
      const double gx = x * step;
      const std::size_t x0 = std::min(static_cast<std::size_t>(gx), kGrid - 2);
      const double ax = gx - x0;
      const double top = grid[y0 * kGrid + x0] * (1 - ax) + grid[y0 * kGrid + x0 + 1] * ax;
      const double bot = grid[(y0 + 1) * kGrid + x0] * (1 - ax) + grid[(y0 + 1) * kGrid + x0 + 1] * ax;
      out[y * size + x] = top * (1 - ay) + bot * ay;
    }
  }
  return out;
}

void stamp(std::vector<std::uint8_t>& mask, std::size_t size, double cx, double cy, double radius) {
  const auto lo_y = static_cast<std::ptrdiff_t>(std::floor(cy - radius));
  const auto hi_y = static_cast<std::ptrdiff_t>(std::ceil(cy + radius));
  const auto lo_x = static_cast<std::ptrdiff_t>(std::floor(cx - radius));
  const auto hi_x = static_cast<std::ptrdiff_t>(std::ceil(cx + radius));
  const auto n = static_cast<std::ptrdiff_t>(size);
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(lo_y, 0); y <= std::min(hi_y, n - 1); ++y) {
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(lo_x, 0); x <= std::min(hi_x, n - 1); ++x) {
      const double ddx = x - cx;
      const double ddy = y - cy;
      if (ddx * ddx + ddy * ddy <= radius * radius) mask[static_cast<std::size_t>(y * n + x)] = 1;
    }
  }
}

/// Random-walk polylines; width w in {1, 2, 3} is drawn as discs of radius w / 2.
void draw_cracks(std::vector<std::uint8_t>& mask, std::size_t size, Rng& rng) {
  const std::size_t lines = 1 + rng.below(3);
  for (std::size_t l = 0; l < lines; ++l) {
    const double width = 1.0 + static_cast<double>(rng.below(3));
    const double radius = std::max(0.5, width / 2.0);
    double x = rng.uniform(0.0, size - 1.0);
    double y = rng.uniform(0.0, size - 1.0);
    double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const std::size_t segments = 3 + rng.below(5);
    const double seg_len = size / 6.0;
    for (std::size_t s = 0; s < segments; ++s) {
      dir += rng.uniform(-0.6, 0.6);
      const double len = seg_len * rng.uniform(0.6, 1.4);
      const double nx = x + len * std::cos(dir);
      const double ny = y + len * std::sin(dir);
      const auto steps = static_cast<std::size_t>(std::ceil(len * 2.0));
      for (std::size_t k = 0; k <= steps; ++k) {
        const double f = static_cast<double>(k) / steps;
        stamp(mask, size, x + f * (nx - x), y + f * (ny - y), radius);
      }
      x = nx;
      y = ny;
    }
  }
}

}  // namespace

Sample make_synthetic_sample(std::size_t size, std::uint64_t seed, std::string id) {
  if (size < 32) throw ConfigError("synthetic: size must be >= 32");
  Rng rng(seed);
  std::vector<std::uint8_t> mask(size * size);
  for (;;) {
    std::fill(mask.begin(), mask.end(), 0);
    draw_cracks(mask, size, rng);
    const auto positives = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
    const double frac = positives / static_cast<double>(mask.size());
    if (frac >= kSyntheticMinPositive && frac <= kSyntheticMaxPositive) break;
  }

  const double base = rng.uniform(0.55, 0.8);
  const std::array<double, 3> tint{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  const std::vector<double> field = smooth_field(size, rng);
  const double crack_level = rng.uniform(0.08, 0.25);

  Sample s{std::move(id), Tensor4({1, 3, size, size}), Tensor4({1, 1, size, size})};
  const std::size_t plane = size * size;
  for (std::size_t i = 0; i < plane; ++i) {
    const double grain = rng.uniform(-0.04, 0.04);
    const double bg = base + 0.12 * field[i] + grain;
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = mask[i] != 0 ? crack_level + grain : bg + tint[c];
      s.image[c * plane + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    s.mask[i] = mask[i] != 0 ? 1.0f : 0.0f;
  }
  return s;
}

std::vector<Sample> make_synthetic_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    out.push_back(make_synthetic_sample(size, derive_seed(seed, static_cast<std::uint64_t>(i)), id));
  }
  return out;
}

}  // namespace ecn
