#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecn/errors.hpp"

namespace ecn {

/// (batch, channels, rows, cols).
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const;
};

/// Dense row-major 4-D array. A default-constructed tensor is empty (holds no
/// value); every constructed tensor has all dimensions >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0));
  Tensor(Shape4 shape, std::vector<T> data);

  static Tensor zeros(Shape4 shape) { return Tensor(shape); }
  static Tensor full(Shape4 shape, T value) { return Tensor(shape, value); }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[offset(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[offset(n, c, h, w)];
  }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape4 shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept;

  /// Bit-for-bit equality of shape and contents.
  bool identical(const Tensor& other) const noexcept;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

using Tensor4 = Tensor<float>;

void check_shape_valid(const Shape4& shape, const char* op);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ecn
