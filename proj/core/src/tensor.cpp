#include "ecn/tensor.hpp"

#include <cmath>
#include <cstring>

namespace ecn {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

void check_shape_valid(const Shape4& shape, const char* op) {
  const char* axes[] = {"n", "c", "h", "w"};
  const std::size_t dims[] = {shape.n, shape.c, shape.h, shape.w};
  for (int i = 0; i < 4; ++i) {
    if (dims[i] == 0) {
      throw DimensionError(op, axes[i], "dimension must be >= 1, got shape " + shape.str());
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, T fill) : shape_(shape) {
  check_shape_valid(shape, "Tensor");
  data_.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  check_shape_valid(shape, "Tensor");
  if (data_.size() != shape.numel()) {
    throw DimensionError("Tensor", "data", "expected " + std::to_string(shape.numel()) +
                                               " elements for " + shape.str() + ", got " +
                                               std::to_string(data_.size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape4 shape) const {
  if (shape.numel() != numel()) {
    throw DimensionError("reshape", "numel", shape_.str() + " -> " + shape.str());
  }
  return Tensor(shape, data_);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
bool Tensor<T>::identical(const Tensor& other) const noexcept {
  if (!(shape_ == other.shape_) || data_.size() != other.data_.size()) return false;
  return data_.empty() ||
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ecn
