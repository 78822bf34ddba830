#include "dsfnet/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dsf {
namespace {

using Dims = std::array<Index, 4>;

Dims pad4(const Shape& s) {
  Dims d{1, 1, 1, 1};
  const std::size_t offset = 4 - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) d[offset + i] = s[i];
  return d;
}

// Row-major strides of `in` as seen from the broadcast extents `out`; stretched axes get stride 0.
Dims broadcast_strides(const Dims& in, const Dims& out) {
  Dims strides{};
  Index running = 1;
  for (int i = 3; i >= 0; --i) {
    strides[i] = (in[i] == out[i]) ? running : 0;
    running *= in[i];
  }
  return strides;
}

template <typename F>
void for_each_broadcast(const Dims& out, const Dims& sa, const Dims& sb, F&& f) {
  Index o = 0;
  for (Index i0 = 0; i0 < out[0]; ++i0)
    for (Index i1 = 0; i1 < out[1]; ++i1)
      for (Index i2 = 0; i2 < out[2]; ++i2) {
        Index ia = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
        Index ib = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
        for (Index i3 = 0; i3 < out[3]; ++i3, ++o) f(o, ia + i3 * sa[3], ib + i3 * sb[3]);
      }
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

const char* binary_name(BinaryKind k) {
  switch (k) {
    case BinaryKind::add: return "add";
    case BinaryKind::sub: return "sub";
    case BinaryKind::mul: return "mul";
    case BinaryKind::max: return "max";
  }
  return "binary";
}

const char* unary_name(UnaryKind k) {
  switch (k) {
    case UnaryKind::exp: return "exp";
    case UnaryKind::ln: return "ln";
    case UnaryKind::relu: return "relu";
    case UnaryKind::sigmoid: return "sigmoid";
    case UnaryKind::neg: return "neg";
    case UnaryKind::abs: return "abs";
  }
  return "unary";
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const Index ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const Index eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw std::invalid_argument("shapes " + shape_string(a) + " and " + shape_string(b) +
                                  " are not broadcastable");
    out[i] = std::max(ea, eb);
  }
  return out;
}

template <typename Scalar>
Var<Scalar> binary(BinaryKind kind, Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& tape = *a.tape;
  const Tensor<Scalar>& va = a.value();
  const Tensor<Scalar>& vb = b.value();
  const Shape out_shape = broadcast_shape(va.shape(), vb.shape());
  Tensor<Scalar> out(out_shape);

  const bool same = va.shape() == vb.shape();
  const Dims od = pad4(out_shape);
  const Dims sa = broadcast_strides(pad4(va.shape()), od);
  const Dims sb = broadcast_strides(pad4(vb.shape()), od);

  if (same) {
    auto& y = out.data();
    switch (kind) {
      case BinaryKind::add: y = va.data() + vb.data(); break;
      case BinaryKind::sub: y = va.data() - vb.data(); break;
      case BinaryKind::mul: y = va.data() * vb.data(); break;
      case BinaryKind::max: y = va.data().max(vb.data()); break;
    }
  } else {
    const Scalar* pa = va.raw();
    const Scalar* pb = vb.raw();
    Scalar* py = out.raw();
    for_each_broadcast(od, sa, sb, [&](Index o, Index ia, Index ib) {
      switch (kind) {
        case BinaryKind::add: py[o] = pa[ia] + pb[ib]; break;
        case BinaryKind::sub: py[o] = pa[ia] - pb[ib]; break;
        case BinaryKind::mul: py[o] = pa[ia] * pb[ib]; break;
        case BinaryKind::max: py[o] = std::max(pa[ia], pb[ib]); break;
      }
    });
  }

  const std::size_t ida = a.id, idb = b.id;
  auto backward = [&tape, kind, ida, idb, od, sa, sb](const Tensor<Scalar>& g,
                                                      std::vector<Tensor<Scalar>*>& gin) {
    const Scalar* pa = tape.value(ida).raw();
    const Scalar* pb = tape.value(idb).raw();
    Scalar* ga = gin[0] ? gin[0]->raw() : nullptr;
    Scalar* gb = gin[1] ? gin[1]->raw() : nullptr;
    const Scalar* pg = g.raw();
    for_each_broadcast(od, sa, sb, [&](Index o, Index ia, Index ib) {
      const Scalar go = pg[o];
      switch (kind) {
        case BinaryKind::add:
          if (ga) ga[ia] += go;
          if (gb) gb[ib] += go;
          break;
        case BinaryKind::sub:
          if (ga) ga[ia] += go;
          if (gb) gb[ib] -= go;
          break;
        case BinaryKind::mul:
          if (ga) ga[ia] += go * pb[ib];
          if (gb) gb[ib] += go * pa[ia];
          break;
        case BinaryKind::max:
          // Ties route to the left operand.
          if (pa[ia] >= pb[ib]) {
            if (ga) ga[ia] += go;
          } else if (gb) {
            gb[ib] += go;
          }
          break;
      }
    });
  };
  return tape.record(binary_name(kind), {a, b}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> unary(UnaryKind kind, Var<Scalar> a) {
  Tape<Scalar>& tape = *a.tape;
  const auto& x = a.value().data();
  Tensor<Scalar> out(a.shape());
  auto& y = out.data();
  switch (kind) {
    case UnaryKind::exp: y = x.exp(); break;
    case UnaryKind::ln:
      if ((x <= Scalar(0)).any()) throw std::domain_error("ln of a non-positive value");
      y = x.log();
      break;
    case UnaryKind::relu: y = x.max(Scalar(0)); break;
    case UnaryKind::sigmoid: y = x.unaryExpr([](Scalar v) { return stable_sigmoid(v); }); break;
    case UnaryKind::neg: y = -x; break;
    case UnaryKind::abs: y = x.abs(); break;
  }

  const std::size_t id_in = a.id;
  const std::size_t id_out = tape.size();
  auto backward = [&tape, kind, id_in, id_out](const Tensor<Scalar>& g,
                                               std::vector<Tensor<Scalar>*>& gin) {
    if (!gin[0]) return;
    const auto& xv = tape.value(id_in).data();
    const auto& yv = tape.value(id_out).data();
    auto& gx = gin[0]->data();
    const auto& go = g.data();
    switch (kind) {
      case UnaryKind::exp: gx += go * yv; break;
      case UnaryKind::ln: gx += go / xv; break;
      case UnaryKind::relu: gx += (xv > Scalar(0)).select(go, Scalar(0)); break;
      case UnaryKind::sigmoid: gx += go * yv * (Scalar(1) - yv); break;
      case UnaryKind::neg: gx -= go; break;
      case UnaryKind::abs: gx += go * xv.sign(); break;
    }
  };
  return tape.record(unary_name(kind), {a}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;
  Tape<Scalar>& tape = *a.tape;
  const auto& va = a.value();
  const auto& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2) throw std::invalid_argument("matmul expects rank-2 operands");
  const Index m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  if (vb.dim(0) != k)
    throw std::invalid_argument("matmul inner extents differ: " + shape_string(va.shape()) + " x " +
                                shape_string(vb.shape()));
  Tensor<Scalar> out({m, n});
  Map(out.raw(), m, n).noalias() = CMap(va.raw(), m, k) * CMap(vb.raw(), k, n);

  const std::size_t ida = a.id, idb = b.id;
  auto backward = [&tape, ida, idb, m, k, n](const Tensor<Scalar>& g,
                                             std::vector<Tensor<Scalar>*>& gin) {
    CMap G(g.raw(), m, n);
    if (gin[0]) Map(gin[0]->raw(), m, k).noalias() += G * CMap(tape.value(idb).raw(), k, n).transpose();
    if (gin[1]) Map(gin[1]->raw(), k, n).noalias() += CMap(tape.value(ida).raw(), m, k).transpose() * G;
  };
  return tape.record("matmul", {a, b}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> reduce(ReduceKind kind, Var<Scalar> x, std::vector<Index> axes, bool keepdims) {
  Tape<Scalar>& tape = *x.tape;
  const auto& vx = x.value();
  const Index rank = vx.rank();
  std::array<bool, 4> reduced{};
  if (axes.empty())
    for (Index i = 0; i < rank; ++i) axes.push_back(i);
  for (Index ax : axes) {
    if (ax < 0 || ax >= rank)
      throw std::invalid_argument("reduce axis " + std::to_string(ax) + " out of range for rank " +
                                  std::to_string(rank));
    reduced[static_cast<std::size_t>(4 - rank + ax)] = true;
  }

  Shape out_shape;
  Dims out_dims{1, 1, 1, 1};
  const Dims in_dims = pad4(vx.shape());
  for (Index i = 0; i < rank; ++i) {
    const std::size_t p = static_cast<std::size_t>(4 - rank + i);
    if (reduced[p]) {
      if (keepdims) out_shape.push_back(1);
    } else {
      out_shape.push_back(vx.dim(i));
      out_dims[p] = vx.dim(i);
    }
  }
  // Output strides addressed with the input's iteration order.
  const Dims so = broadcast_strides(out_dims, in_dims);
  const Dims unit = broadcast_strides(in_dims, in_dims);

  Index count = 1;
  for (std::size_t p = 0; p < 4; ++p)
    if (reduced[p]) count *= in_dims[p];

  Tensor<Scalar> out(out_shape);
  std::vector<Index> argmax;
  Scalar* py = out.raw();
  const Scalar* px = vx.raw();
  if (kind == ReduceKind::max) {
    out.data().setConstant(-std::numeric_limits<Scalar>::infinity());
    argmax.assign(static_cast<std::size_t>(out.size()), 0);
    for_each_broadcast(in_dims, unit, so, [&](Index, Index i, Index o) {
      if (px[i] > py[o]) {
        py[o] = px[i];
        argmax[static_cast<std::size_t>(o)] = i;
      }
    });
  } else {
    for_each_broadcast(in_dims, unit, so, [&](Index, Index i, Index o) { py[o] += px[i]; });
    if (kind == ReduceKind::mean) out.data() /= static_cast<Scalar>(count);
  }

  const char* name = kind == ReduceKind::sum ? "sum" : kind == ReduceKind::mean ? "mean" : "max";
  auto backward = [kind, in_dims, unit, so, count, argmax = std::move(argmax)](
                      const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
    if (!gin[0]) return;
    Scalar* gx = gin[0]->raw();
    const Scalar* pg = g.raw();
    if (kind == ReduceKind::max) {
      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += pg[o];
      return;
    }
    const Scalar factor = kind == ReduceKind::mean ? Scalar(1) / static_cast<Scalar>(count) : Scalar(1);
    for_each_broadcast(in_dims, unit, so, [&](Index, Index i, Index o) { gx[i] += factor * pg[o]; });
  };
  return tape.record(name, {x}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor) {
  Tape<Scalar>& tape = *x.tape;
  Tensor<Scalar> out(x.shape(), x.value().data() * factor);
  return tape.record("scale", {x}, std::move(out),
                     [factor](const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                       if (gin[0]) gin[0]->data() += factor * g.data();
                     });
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> x, Scalar offset) {
  Tape<Scalar>& tape = *x.tape;
  Tensor<Scalar> out(x.shape(), x.value().data() + offset);
  return tape.record("add_scalar", {x}, std::move(out),
                     [](const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                       if (gin[0]) gin[0]->data() += g.data();
                     });
}

template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> x, Scalar lo, Scalar hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp bounds out of order");
  Tape<Scalar>& tape = *x.tape;
  Tensor<Scalar> out(x.shape(), x.value().data().max(lo).min(hi));
  const std::size_t id_in = x.id;
  return tape.record("clamp", {x}, std::move(out),
                     [&tape, id_in, lo, hi](const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                       if (!gin[0]) return;
                       const auto& xv = tape.value(id_in).data();
                       gin[0]->data() += (xv >= lo && xv <= hi).select(g.data(), Scalar(0));
                     });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape) {
  Tape<Scalar>& tape = *x.tape;
  if (shape_size(shape) != x.value().size())
    throw std::invalid_argument("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  Tensor<Scalar> out(std::move(shape), x.value().data());
  return tape.record("reshape", {x}, std::move(out),
                     [](const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                       if (gin[0]) gin[0]->data() += g.data();
                     });
}

template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, Index axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  Tape<Scalar>& tape = *parts.front().tape;
  Shape out_shape = parts.front().shape();
  const Index rank = static_cast<Index>(out_shape.size());
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat axis out of range");
  const auto ax = static_cast<std::size_t>(axis);

  Index outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= out_shape[i];
  for (std::size_t i = ax + 1; i < out_shape.size(); ++i) inner *= out_shape[i];

  std::vector<Index> widths;
  Index total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw std::invalid_argument("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != ax && s[i] != out_shape[i])
        throw std::invalid_argument("concat shape mismatch: " + shape_string(s) + " vs " +
                                    shape_string(out_shape));
    widths.push_back(s[ax] * inner);
    total += s[ax];
  }
  out_shape[ax] = total;
  const Index row = total * inner;

  Tensor<Scalar> out(out_shape);
  Index col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Scalar* src = parts[k].value().raw();
    for (Index o = 0; o < outer; ++o)
      std::copy_n(src + o * widths[k], widths[k], out.raw() + o * row + col);
    col += widths[k];
  }

  auto backward = [outer, row, widths](const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
    Index c = 0;
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (gin[k]) {
        Scalar* dst = gin[k]->raw();
        for (Index o = 0; o < outer; ++o)
          for (Index j = 0; j < widths[k]; ++j) dst[o * widths[k] + j] += g.raw()[o * row + c + j];
      }
      c += widths[k];
    }
  };
  return tape.record("concat", parts, std::move(out), backward);
}

#define DSF_INSTANTIATE_OPS(S)                                                          \
  template Var<S> binary<S>(BinaryKind, Var<S>, Var<S>);                                \
  template Var<S> unary<S>(UnaryKind, Var<S>);                                          \
  template Var<S> matmul<S>(Var<S>, Var<S>);                                            \
  template Var<S> reduce<S>(ReduceKind, Var<S>, std::vector<Index>, bool);              \
  template Var<S> scale<S>(Var<S>, S);                                                  \
  template Var<S> add_scalar<S>(Var<S>, S);                                             \
  template Var<S> clamp<S>(Var<S>, S, S);                                               \
  template Var<S> reshape<S>(Var<S>, Shape);                                            \
  template Var<S> concat<S>(const std::vector<Var<S>>&, Index);

DSF_INSTANTIATE_OPS(float)
DSF_INSTANTIATE_OPS(double)

}  // namespace dsf
