#pragma once

#include "dsfnet/tensor.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace dsf {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Gradient slots indexed by tape node id. Slots of nodes that do not require
/// grad stay empty; requires-grad leaves always hold a (possibly zero) tensor.
template <typename Scalar>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor<Scalar>> slots, std::vector<bool> present)
      : slots_(std::move(slots)), present_(std::move(present)) {}

  bool has(Var<Scalar> v) const { return v.id < present_.size() && present_[v.id]; }
  const Tensor<Scalar>& operator[](Var<Scalar> v) const;

 private:
  std::vector<Tensor<Scalar>> slots_;
  std::vector<bool> present_;
};

/// Linear record of primitive operations in execution order. Reverse-mode
/// differentiation walks the nodes backwards exactly once.
template <typename Scalar>
class Tape {
 public:
  // Receives the output gradient and one accumulator per input (nullptr when
  // that input does not require grad). Implementations add into accumulators.
  using BackwardFn =
      std::function<void(const Tensor<Scalar>& grad_out, std::vector<Tensor<Scalar>*>& grad_in)>;

  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor<Scalar> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false);
  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  /// Appends an op node. The value must be finite; `fn` is dropped when no input needs grad.
  Var<Scalar> record(std::string_view op, const std::vector<Var<Scalar>>& inputs,
                     Tensor<Scalar> value, BackwardFn fn);

  bool any_requires_grad(const std::vector<Var<Scalar>>& inputs) const;

  const Tensor<Scalar>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// d(output)/d(node) for every node that requires grad. Output must be a scalar on this tape.
  Gradients<Scalar> backward(Var<Scalar> output) const;

 private:
  std::vector<Node> nodes_;
};

}  // namespace dsf
