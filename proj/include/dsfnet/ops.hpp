#pragma once

#include "dsfnet/autograd.hpp"
#include "dsfnet/tensor.hpp"

#include <vector>

namespace dsf {

enum class BinaryKind { add, sub, mul, max };
enum class UnaryKind { exp, ln, relu, sigmoid, neg, abs };
enum class ReduceKind { sum, mean, max };

/// Numpy-style broadcast: shapes are right-aligned, missing leading axes count
/// as extent 1, and an axis is compatible when extents match or one is 1.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename Scalar>
Var<Scalar> binary(BinaryKind kind, Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> unary(UnaryKind kind, Var<Scalar> a);

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);

// Reduced axes are dropped unless keepdims. An empty axis list reduces everything.
template <typename Scalar>
Var<Scalar> reduce(ReduceKind kind, Var<Scalar> x, std::vector<Index> axes, bool keepdims = false);

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor);

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> x, Scalar offset);

// Gradient passes through inside [lo, hi] and is zero where the value was clipped.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> x, Scalar lo, Scalar hi);

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape);

template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, Index axis);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) { return binary(BinaryKind::add, a, b); }
template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) { return binary(BinaryKind::sub, a, b); }
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) { return binary(BinaryKind::mul, a, b); }
template <typename Scalar>
Var<Scalar> maximum(Var<Scalar> a, Var<Scalar> b) { return binary(BinaryKind::max, a, b); }

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> x) { return unary(UnaryKind::exp, x); }
template <typename Scalar>
Var<Scalar> log(Var<Scalar> x) { return unary(UnaryKind::ln, x); }
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) { return unary(UnaryKind::relu, x); }
template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) { return unary(UnaryKind::sigmoid, x); }
template <typename Scalar>
Var<Scalar> abs(Var<Scalar> x) { return unary(UnaryKind::abs, x); }

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) { return reduce(ReduceKind::sum, x, {}); }
template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) { return reduce(ReduceKind::mean, x, {}); }

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) { return mul(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a) { return unary(UnaryKind::neg, a); }

}  // namespace dsf
