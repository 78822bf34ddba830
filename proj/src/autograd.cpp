#include "dsfnet/autograd.hpp"

#include <stdexcept>

namespace dsf {

template <typename Scalar>
const Tensor<Scalar>& Gradients<Scalar>::operator[](Var<Scalar> v) const {
  if (!has(v)) throw std::out_of_range("no gradient recorded for node " + std::to_string(v.id));
  return slots_[v.id];
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::leaf(Tensor<Scalar> value, bool requires_grad) {
  if (!value.all_finite()) throw std::domain_error("non-finite value in leaf tensor");
  nodes_.push_back(Node{"leaf", {}, std::move(value), requires_grad, {}});
  return Var<Scalar>{this, nodes_.size() - 1};
}

template <typename Scalar>
bool Tape<Scalar>::any_requires_grad(const std::vector<Var<Scalar>>& inputs) const {
  for (const auto& v : inputs)
    if (nodes_.at(v.id).requires_grad) return true;
  return false;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(std::string_view op, const std::vector<Var<Scalar>>& inputs,
                                 Tensor<Scalar> value, BackwardFn fn) {
  Node node;
  node.op = std::string(op);
  node.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (v.tape != this) throw std::invalid_argument(node.op + ": input belongs to another tape");
    if (v.id >= nodes_.size()) throw std::invalid_argument(node.op + ": input id out of range");
    node.inputs.push_back(v.id);
  }
  if (!value.all_finite()) throw std::domain_error(node.op + " produced a non-finite value");
  node.requires_grad = any_requires_grad(inputs);
  if (node.requires_grad) node.backward = std::move(fn);
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<Scalar>{this, nodes_.size() - 1};
}

template <typename Scalar>
Gradients<Scalar> Tape<Scalar>::backward(Var<Scalar> output) const {
  if (output.tape != this || output.id >= nodes_.size())
    throw std::invalid_argument("backward: output is not on this tape");
  const auto& out = nodes_[output.id];
  if (out.value.size() != 1) throw std::invalid_argument("backward: output must be a scalar");

  std::vector<Tensor<Scalar>> grads(nodes_.size());
  std::vector<bool> present(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad && nodes_[i].inputs.empty()) {
      grads[i] = Tensor<Scalar>::zeros(nodes_[i].value.shape());
      present[i] = true;
    }
  }
  if (!out.requires_grad) return Gradients<Scalar>(std::move(grads), std::move(present));

  grads[output.id] = Tensor<Scalar>::constant(out.value.shape(), Scalar(1));
  present[output.id] = true;
  // Interior slots are released once propagated; only leaf gradients survive.

  std::vector<Tensor<Scalar>*> accumulators;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const auto& node = nodes_[i];
    if (!present[i] || !node.backward) continue;
    accumulators.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!present[in]) {
        grads[in] = Tensor<Scalar>::zeros(nodes_[in].value.shape());
        present[in] = true;
      }
      accumulators[k] = &grads[in];
    }
    node.backward(grads[i], accumulators);
    if (!node.inputs.empty()) {
      grads[i] = Tensor<Scalar>();
      present[i] = false;
    }
  }
  return Gradients<Scalar>(std::move(grads), std::move(present));
}

template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dsf
