#include "ecn/params.hpp"

#include <algorithm>

namespace ecn {

template <typename T>
std::size_t ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t i = entries_.size();
  index_.emplace(name, i);
  Tensor<T> grad(value.shape());
  entries_.push_back({std::move(name), std::move(value), std::move(grad)});
  return i;
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
std::size_t ParamStore<T>::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const noexcept {
  std::size_t total = 0;
  for (const Entry& e : entries_) total += e.value.numel();
  return total;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (Entry& e : entries_) std::fill(e.grad.data().begin(), e.grad.data().end(), T(0));
  grads_ready_ = false;
}

template <typename T>
bool ParamStore<T>::identical(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!entries_[i].value.identical(other.entries_[i].value)) return false;
  }
  return true;
}

template <typename T>
std::size_t BufferStore<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name) != 0) throw ConfigError("duplicate buffer name '" + name + "'");
  const std::size_t i = entries_.size();
  index_.emplace(name, i);
  entries_.push_back({std::move(name), std::move(value)});
  return i;
}

template <typename T>
bool BufferStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
std::size_t BufferStore<T>::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("unknown buffer '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
bool BufferStore<T>::identical(const BufferStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!entries_[i].value.identical(other.entries_[i].value)) return false;
  }
  return true;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class BufferStore<float>;
template class BufferStore<double>;

}  // namespace ecn
