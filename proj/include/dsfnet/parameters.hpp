#pragma once

#include "dsfnet/autograd.hpp"
#include "dsfnet/layers.hpp"
#include "dsfnet/tensor.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dsf {

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  bool trainable = true;  // false for running statistics and other buffers
};

/// Named tensors in insertion order. Names are unique.
template <typename Scalar>
class ParameterStore {
 public:
  Tensor<Scalar>& add(std::string name, Tensor<Scalar> value, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Parameter<Scalar>{std::move(name), std::move(value), trainable});
    return entries_.back().value;
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  Parameter<Scalar>& entry(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return entries_[it->second];
  }
  const Parameter<Scalar>& entry(std::string_view name) const {
    return const_cast<ParameterStore*>(this)->entry(name);
  }

  Tensor<Scalar>& at(std::string_view name) { return entry(name).value; }
  const Tensor<Scalar>& at(std::string_view name) const { return entry(name).value; }

  std::vector<Parameter<Scalar>>& entries() { return entries_; }
  const std::vector<Parameter<Scalar>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Adds gamma/beta (trainable) and running statistics (buffers) under `prefix`.
  void add_batch_norm(const std::string& prefix, Index channels) {
    add(prefix + ".gamma", Tensor<Scalar>::constant({channels}, Scalar(1)));
    add(prefix + ".beta", Tensor<Scalar>::zeros({channels}));
    add(prefix + ".running_mean", Tensor<Scalar>::zeros({channels}), false);
    add(prefix + ".running_var", Tensor<Scalar>::constant({channels}, Scalar(1)), false);
  }

 private:
  std::vector<Parameter<Scalar>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binds a store onto a tape for one forward pass. Trainable parameters become
/// leaves on first use; buffers are updated in place by train-mode layers.
template <typename Scalar>
class ParamBinding {
 public:
  ParamBinding(Tape<Scalar>& tape, ParameterStore<Scalar>& store, bool requires_grad = true)
      : tape_(tape), store_(store), requires_grad_(requires_grad) {}

  Var<Scalar> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& p = store_.entry(name);
    auto v = tape_.leaf(p.value, requires_grad_ && p.trainable);
    bound_.emplace(name, v);
    return v;
  }

  Var<Scalar> batch_norm(const std::string& prefix, Var<Scalar> x, Mode mode) {
    BatchNormState<Scalar> state{store_.at(prefix + ".running_mean"), store_.at(prefix + ".running_var")};
    auto y = dsf::batch_norm(x, (*this)(prefix + ".gamma"), (*this)(prefix + ".beta"), state, mode);
    if (mode == Mode::train) {
      store_.at(prefix + ".running_mean") = std::move(state.running_mean);
      store_.at(prefix + ".running_var") = std::move(state.running_var);
    }
    return y;
  }

  /// Uses `v` for `name` instead of a leaf built from the store.
  void bind(const std::string& name, Var<Scalar> v) {
    if (v.shape() != store_.at(name).shape())
      throw std::invalid_argument("bind: shape mismatch for " + name);
    bound_[name] = v;
  }

  Tape<Scalar>& tape() { return tape_; }
  ParameterStore<Scalar>& store() { return store_; }
  const std::map<std::string, Var<Scalar>>& bound() const { return bound_; }

 private:
  Tape<Scalar>& tape_;
  ParameterStore<Scalar>& store_;
  bool requires_grad_;
  std::map<std::string, Var<Scalar>> bound_;
};

}  // namespace dsf
