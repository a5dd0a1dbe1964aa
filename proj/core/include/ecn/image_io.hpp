#pragma once

// 8-bit PNG input/output and resampling for (1, C, H, W) image tensors.

#include <cstddef>
#include <string>

#include "ecn/tensor.hpp"

namespace ecn {

/// Image (1, 3, H, W) in [0, 1] plus a binary (1, 1, H, W) mask.
struct Sample {
  std::string id;
  Tensor4 image;
  Tensor4 mask;
};

/// Grayscale or RGB file to (1, 3, H, W) in [0, 1]; gray is replicated to 3 channels.
Tensor4 load_image(const std::string& path);

/// Any 8-bit file to (1, 1, H, W) with value >= 128 -> 1, else 0.
Tensor4 load_mask(const std::string& path);

/// Loads the pair and takes the image file stem as the id. Throws IoError on a size mismatch.
Sample load_sample(const std::string& image_path, const std::string& mask_path);

/// Writes a (1, 1, H, W) mask as 8-bit gray, nonzero -> 255.
void save_mask(const Tensor4& mask, const std::string& path);

/// Writes (1, 1, H, W) or (1, 3, H, W) values in [0, 1] as 8-bit gray or RGB (rounded).
void save_image(const Tensor4& image, const std::string& path);

/// Half-pixel-centered bilinear resampling with edge clamping.
Tensor4 resize_bilinear(const Tensor4& image, std::size_t height, std::size_t width);

/// Nearest-neighbor resampling; keeps masks binary.
Tensor4 resize_nearest(const Tensor4& image, std::size_t height, std::size_t width);

/// File name without directory and extension.
std::string path_stem(const std::string& path);

}  // namespace ecn
