#include "ecn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include <png.h>

#include "ecn/errors.hpp"

namespace ecn {
namespace {

struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

Raster read_png(const std::string& path, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw IoError(path, std::string("cannot read PNG: ") + img.message);
  }
  img.format = format;
  Raster r;
  r.width = img.width;
  r.height = img.height;
  r.pixels.resize(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr) == 0) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path, "cannot decode PNG: " + msg);
  }
  return r;
}

void write_png(const std::string& path, const std::vector<std::uint8_t>& pixels, std::size_t width,
               std::size_t height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr) == 0) {
    throw IoError(path, std::string("cannot write PNG: ") + img.message);
  }
}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void check_single_image(const Tensor4& t, const char* op) {
  if (t.shape().n != 1) throw DimensionError(op, "n", "expected a single image");
}

}  // namespace

Tensor4 load_image(const std::string& path) {
  const Raster r = read_png(path, PNG_FORMAT_RGB);
  Tensor4 out({1, 3, r.height, r.width});
  const std::size_t plane = r.height * r.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = r.pixels[i * 3 + c] / 255.0f;
  }
  return out;
}

Tensor4 load_mask(const std::string& path) {
  const Raster r = read_png(path, PNG_FORMAT_GRAY);
  Tensor4 out({1, 1, r.height, r.width});
  for (std::size_t i = 0; i < r.pixels.size(); ++i) out[i] = r.pixels[i] >= 128 ? 1.0f : 0.0f;
  return out;
}

Sample load_sample(const std::string& image_path, const std::string& mask_path) {
  Sample s{path_stem(image_path), load_image(image_path), load_mask(mask_path)};
  const Shape4& a = s.image.shape();
  const Shape4& b = s.mask.shape();
  if (a.h != b.h || a.w != b.w) {
    throw IoError(mask_path, "mask is " + std::to_string(b.w) + "x" + std::to_string(b.h) +
                                 " but image " + image_path + " is " + std::to_string(a.w) + "x" +
                                 std::to_string(a.h));
  }
  return s;
}

void save_mask(const Tensor4& mask, const std::string& path) {
  check_single_image(mask, "save_mask");
  if (mask.shape().c != 1) throw DimensionError("save_mask", "c", "expected 1 channel");
  std::vector<std::uint8_t> px(mask.numel());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask[i] != 0.0f ? 255 : 0;
  write_png(path, px, mask.shape().w, mask.shape().h, PNG_FORMAT_GRAY);
}

void save_image(const Tensor4& image, const std::string& path) {
  check_single_image(image, "save_image");
  const Shape4& s = image.shape();
  if (s.c != 1 && s.c != 3) throw DimensionError("save_image", "c", "expected 1 or 3 channels");
  const std::size_t plane = s.plane();
  std::vector<std::uint8_t> px(image.numel());
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < s.c; ++c) px[i * s.c + c] = to_byte(image[c * plane + i]);
  }
  write_png(path, px, s.w, s.h, s.c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB);
}

Tensor4 resize_bilinear(const Tensor4& image, std::size_t height, std::size_t width) {
  const Shape4& s = image.shape();
  if (height == 0 || width == 0) throw DimensionError("resize", "h", "target size must be >= 1");
  Tensor4 out({s.n, s.c, height, width});
  const double sy = static_cast<double>(s.h) / height;
  const double sx = static_cast<double>(s.w) / width;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* src = image.ptr() + nc * s.plane();
    float* dst = out.ptr() + nc * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(s.h - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, s.h - 1);
      const double wy = fy - y0;
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(s.w - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, s.w - 1);
        const double wx = fx - x0;
        const double top = src[y0 * s.w + x0] * (1 - wx) + src[y0 * s.w + x1] * wx;
        const double bot = src[y1 * s.w + x0] * (1 - wx) + src[y1 * s.w + x1] * wx;
        dst[y * width + x] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Tensor4 resize_nearest(const Tensor4& image, std::size_t height, std::size_t width) {
  const Shape4& s = image.shape();
  if (height == 0 || width == 0) throw DimensionError("resize", "h", "target size must be >= 1");
  Tensor4 out({s.n, s.c, height, width});
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* src = image.ptr() + nc * s.plane();
    float* dst = out.ptr() + nc * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = std::min(y * s.h / height, s.h - 1);
      for (std::size_t x = 0; x < width; ++x) {
        dst[y * width + x] = src[sy * s.w + std::min(x * s.w / width, s.w - 1)];
      }
    }
  }
  return out;
}

std::string path_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

}  // namespace ecn
