#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape records every operation as a node in creation order, which is a
// topological order by construction. backward() walks the nodes in reverse,
// visiting each exactly once, then writes parameter gradients into the
// ParamStore and clears the tape.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "ecn/params.hpp"
#include "ecn/tensor.hpp"

namespace ecn {

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape4& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Called with the node's own id once its gradient is complete.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When false, ops still compute values but record no backward closures.
  void set_recording(bool on) noexcept { recording_ = on; }
  bool recording() const noexcept { return recording_; }

  Var<T> constant(Tensor<T> value);
  /// Differentiable leaf whose gradient is readable after backward via grad().
  Var<T> input(Tensor<T> value);
  /// Leaf bound to an entry of `store`; its gradient lands in the store on backward.
  Var<T> parameter(ParamStore<T>& store, std::string_view name);
  Var<T> parameter(ParamStore<T>& store, std::size_t index);

  /// Registers an op result. `fn` runs only if the node requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn);

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id()].value; }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id()].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulated at a node (empty if none flowed there).
  const Tensor<T>& grad(Var<T> v) const { return nodes_[v.id()].grad; }
  const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Adds `g` into the node's gradient if that node requires one.
  void accumulate(Var<T> v, const Tensor<T>& g);
  void accumulate(Var<T> v, Tensor<T>&& g);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Fills gradients of every parameter reachable from `loss` (zero for the
  /// rest), marks the store's gradients ready, then clears the tape.
  /// Throws UsageError if `loss` is not a single element.
  void backward(Var<T> loss, ParamStore<T>& params);

  /// Runs the reverse pass without touching any ParamStore and without clearing,
  /// so leaf gradients stay readable through grad().
  void backward_keep(Var<T> loss);

  void clear();

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    ParamStore<T>* store = nullptr;
    std::size_t param_index = 0;
    bool requires_grad = false;
  };

  void reverse_pass(Var<T> loss);

  std::deque<Node> nodes_;
  bool recording_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ecn
