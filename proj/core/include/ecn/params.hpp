#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecn/tensor.hpp"

namespace ecn {

/// Ordered, uniquely named learnable tensors with paired gradient buffers.
/// Iteration order is insertion order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  /// Throws ConfigError on a duplicate name.
  std::size_t add(std::string name, Tensor<T> value);

  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view name) const;
  /// Throws UsageError when absent.
  std::size_t index_of(std::string_view name) const;

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& at(std::string_view name) { return entries_[index_of(name)]; }
  const Entry& at(std::string_view name) const { return entries_[index_of(name)]; }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  /// Total number of learnable scalars.
  std::size_t scalar_count() const noexcept;

  void zero_grad();
  /// Set by Tape::backward, cleared by zero_grad.
  bool grads_ready() const noexcept { return grads_ready_; }
  void mark_grads_ready() noexcept { grads_ready_ = true; }

  /// Bitwise equality of names, shapes, and values.
  bool identical(const ParamStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  bool grads_ready_ = false;
};

/// Ordered named non-learnable tensors (batch-norm running statistics).
template <typename T>
class BufferStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  std::size_t add(std::string name, Tensor<T> value);
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Tensor<T>& at(std::string_view name) { return entries_[index_of(name)].value; }
  const Tensor<T>& at(std::string_view name) const { return entries_[index_of(name)].value; }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  bool identical(const BufferStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class BufferStore<float>;
extern template class BufferStore<double>;

}  // namespace ecn
