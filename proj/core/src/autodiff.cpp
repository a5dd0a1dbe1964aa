#include "ecn/autodiff.hpp"

#include <algorithm>

namespace ecn {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, 0, false});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, 0, recording_});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(ParamStore<T>& store, std::string_view name) {
  return parameter(store, store.index_of(name));
}

template <typename T>
Var<T> Tape<T>::parameter(ParamStore<T>& store, std::size_t index) {
  nodes_.push_back(Node{store[index].value, {}, {}, &store, index, recording_});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var<T>& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, 0, needs});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var<T>& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, 0, needs});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, const Tensor<T>& g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (!(g.shape() == node.value.shape())) {
    throw DimensionError("backward", "grad", "gradient " + g.shape().str() + " for value " +
                                                 node.value.shape().str());
  }
  if (node.grad.empty()) {
    node.grad = g;
    return;
  }
  T* dst = node.grad.ptr();
  const T* src = g.ptr();
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, Tensor<T>&& g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.empty() && g.shape() == node.value.shape()) {
    node.grad = std::move(g);
    return;
  }
  accumulate(v, static_cast<const Tensor<T>&>(g));
}

template <typename T>
void Tape<T>::reverse_pass(Var<T> loss) {
  if (loss.id() >= nodes_.size()) throw UsageError("backward: loss is not on this tape");
  Node& root = nodes_[loss.id()];
  if (root.value.numel() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " + root.value.shape().str());
  }
  if (!root.requires_grad) return;
  root.grad = Tensor<T>(root.value.shape(), T(1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, i);
  }
}

template <typename T>
void Tape<T>::backward(Var<T> loss, ParamStore<T>& params) {
  params.zero_grad();
  reverse_pass(loss);
  for (const Node& node : nodes_) {
    if (node.store != &params || node.grad.empty()) continue;
    Tensor<T>& dst = params[node.param_index].grad;
    for (std::size_t j = 0; j < dst.numel(); ++j) dst[j] += node.grad[j];
  }
  params.mark_grads_ready();
  clear();
}

template <typename T>
void Tape<T>::backward_keep(Var<T> loss) {
  reverse_pass(loss);
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ecn
