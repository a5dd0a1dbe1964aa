#pragma once

// Paired image/mask augmentation. Geometric transforms move image and mask
// together (mask: nearest sampling, zero fill); photometric ones touch the
// image only. Each transform is gated by its own probability and the random
// draws happen in a fixed order, so a given Rng state always yields the same result.

#include <array>
#include <string>
#include <string_view>

#include "ecn/image_io.hpp"
#include "ecn/rng.hpp"

namespace ecn {

struct AugmentConfig {
  double p_flip = 0.7;
  double p_rotate = 0.7;
  double p_color = 0.2;
  double p_blur = 0.2;
  double p_shift_scale_rotate = 0.2;
  double p_noise = 0.2;
  double p_invert = 0.2;

  double rotate_deg = 30.0;
  double contrast = 0.2;    // alpha in [1 - c, 1 + c]
  double brightness = 0.2;  // beta in [-b, b]
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.5;
  double shift = 0.1;  // fraction of width/height
  double scale = 0.1;
  double ssr_rotate_deg = 15.0;
  double noise_sigma_min = 0.01;
  double noise_sigma_max = 0.05;

  /// Every probability set to 0.
  static AugmentConfig none();

  /// Throws ConfigError for probabilities outside [0, 1] or inverted ranges.
  void validate() const;
};

/// "[augment]" section with one "key = value" line per field, keys named as
/// the members. Missing keys keep their defaults; unknown keys are rejected.
AugmentConfig parse_augment_config(std::string_view text);
AugmentConfig load_augment_config(const std::string& path);
std::string to_text(const AugmentConfig& cfg);

/// What augment() applied.
struct AugmentTrace {
  bool hflip = false;
  bool vflip = false;
  bool rotate = false;
  double angle_deg = 0.0;
  bool color = false;
  double alpha = 1.0;
  double beta = 0.0;
  bool blur = false;
  double blur_sigma = 0.0;
  bool shift_scale_rotate = false;
  double shift_x = 0.0;  // pixels
  double shift_y = 0.0;
  double scale = 1.0;
  double ssr_angle_deg = 0.0;
  bool noise = false;
  double noise_sigma = 0.0;
  bool invert = false;
};

Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng, AugmentTrace* trace = nullptr);

Tensor4 flip_horizontal(const Tensor4& x);
Tensor4 flip_vertical(const Tensor4& x);

/// Row-major 2x3 matrix mapping output pixel coordinates to input coordinates.
using Affine = std::array<double, 6>;

/// Rotation by `angle_deg` (counter-clockwise on screen) and scaling about the
/// image center followed by a shift, returned as the output -> input mapping.
Affine inverse_similarity(std::size_t height, std::size_t width, double angle_deg, double scale,
                          double shift_x, double shift_y);

enum class Sampling { bilinear_reflect, nearest_zero };

Tensor4 warp_affine(const Tensor4& x, const Affine& inverse, Sampling mode);

/// Separable Gaussian blur, radius ceil(3 sigma), reflected borders.
Tensor4 gaussian_blur(const Tensor4& x, double sigma);

}  // namespace ecn
