#include "dsfnet/layers.hpp"

#include "dsfnet/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsf {
namespace {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MapMat = Eigen::Map<RowMat<Scalar>>;
template <typename Scalar>
using CMapMat = Eigen::Map<const RowMat<Scalar>>;

struct Geometry {
  Index channels, height, width;
  Index kernel, stride, dilation, padding;
  Index out_h, out_w;

  Index rows() const { return channels * kernel * kernel; }
  Index cols() const { return out_h * out_w; }
  bool pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

// Unfolds one image (C x H x W) into a (C*n*n) x (Ho*Wo) patch matrix.
template <typename Scalar>
void im2col(const Scalar* img, const Geometry& g, Scalar* col) {
  const Index plane = g.height * g.width;
  for (Index c = 0; c < g.channels; ++c)
    for (Index ki = 0; ki < g.kernel; ++ki)
      for (Index kj = 0; kj < g.kernel; ++kj) {
        Scalar* dst = col + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
        const Scalar* src = img + c * plane;
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki * g.dilation;
          Scalar* row = dst + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill_n(row, g.out_w, Scalar(0));
            continue;
          }
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj * g.dilation;
            row[ow] = (iw >= 0 && iw < g.width) ? src[ih * g.width + iw] : Scalar(0);
          }
        }
      }
}

// Adjoint of im2col: scatters patch values back and accumulates into the image.
template <typename Scalar>
void col2im(const Scalar* col, const Geometry& g, Scalar* img) {
  const Index plane = g.height * g.width;
  for (Index c = 0; c < g.channels; ++c)
    for (Index ki = 0; ki < g.kernel; ++ki)
      for (Index kj = 0; kj < g.kernel; ++kj) {
        const Scalar* src = col + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
        Scalar* dst = img + c * plane;
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki * g.dilation;
          if (ih < 0 || ih >= g.height) continue;
          const Scalar* row = src + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj * g.dilation;
            if (iw >= 0 && iw < g.width) dst[ih * g.width + iw] += row[ow];
          }
        }
      }
}

void check_spec(const Conv2dSpec& spec) {
  if (spec.kernel < 1 || spec.stride < 1 || spec.dilation < 1 || spec.padding < 0 ||
      spec.in_channels < 1 || spec.out_channels < 1)
    throw std::invalid_argument("invalid convolution geometry");
}

template <typename Scalar>
void check_bias(const std::optional<Var<Scalar>>& bias, const Conv2dSpec& spec) {
  if (spec.has_bias != bias.has_value())
    throw std::invalid_argument("conv bias presence does not match spec.has_bias");
  if (bias && bias->shape() != Shape{spec.out_channels})
    throw std::invalid_argument("conv bias shape " + shape_string(bias->shape()));
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, const Conv2dSpec& spec,
                   std::optional<Var<Scalar>> bias) {
  check_spec(spec);
  check_bias(bias, spec);
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("conv2d expects B x C x H x W input");
  if (vx.dim(1) != spec.in_channels)
    throw std::invalid_argument("conv2d channel mismatch: input has " + std::to_string(vx.dim(1)) +
                                ", spec expects " + std::to_string(spec.in_channels));
  if (weight.shape() != spec.weight_shape())
    throw std::invalid_argument("conv2d weight shape " + shape_string(weight.shape()) + " expected " +
                                shape_string(spec.weight_shape()));
  const Index batch = vx.dim(0);
  const Geometry g{spec.in_channels, vx.dim(2),     vx.dim(3),
                   spec.kernel,      spec.stride,   spec.dilation,
                   spec.padding,     spec.output_extent(vx.dim(2)), spec.output_extent(vx.dim(3))};
  if (g.out_h < 1 || g.out_w < 1 || vx.dim(2) + 2 * spec.padding < spec.effective_kernel() ||
      vx.dim(3) + 2 * spec.padding < spec.effective_kernel())
    throw std::invalid_argument("conv2d output extent below 1");

  const Index out_ch = spec.out_channels;
  Tensor<Scalar> out({batch, out_ch, g.out_h, g.out_w});
  CMapMat<Scalar> w(weight.value().raw(), out_ch, g.rows());
  RowMat<Scalar> col(g.pointwise() ? 0 : g.rows(), g.pointwise() ? 0 : g.cols());
  const Index in_plane = spec.in_channels * g.height * g.width;
  const Index out_plane = out_ch * g.cols();
  for (Index b = 0; b < batch; ++b) {
    MapMat<Scalar> y(out.raw() + b * out_plane, out_ch, g.cols());
    if (g.pointwise()) {
      y.noalias() = w * CMapMat<Scalar>(vx.raw() + b * in_plane, g.rows(), g.cols());
    } else {
      im2col(vx.raw() + b * in_plane, g, col.data());
      y.noalias() = w * col;
    }
    if (bias) y.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias->value().raw(), out_ch);
  }

  Tape<Scalar>& tape = *x.tape;
  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const std::size_t idx = x.id, idw = weight.id;
  auto backward = [&tape, idx, idw, g, batch, out_ch, in_plane, out_plane](
                      const Tensor<Scalar>& grad, std::vector<Tensor<Scalar>*>& gin) {
    const auto& xv = tape.value(idx);
    CMapMat<Scalar> w(tape.value(idw).raw(), out_ch, g.rows());
    RowMat<Scalar> col(g.rows(), g.cols());
    RowMat<Scalar> dcol(g.rows(), g.cols());
    for (Index b = 0; b < batch; ++b) {
      CMapMat<Scalar> gy(grad.raw() + b * out_plane, out_ch, g.cols());
      if (gin[1]) {
        MapMat<Scalar> gw(gin[1]->raw(), out_ch, g.rows());
        if (g.pointwise()) {
          gw.noalias() += gy * CMapMat<Scalar>(xv.raw() + b * in_plane, g.rows(), g.cols()).transpose();
        } else {
          im2col(xv.raw() + b * in_plane, g, col.data());
          gw.noalias() += gy * col.transpose();
        }
      }
      if (gin[0]) {
        if (g.pointwise()) {
          MapMat<Scalar>(gin[0]->raw() + b * in_plane, g.rows(), g.cols()).noalias() += w.transpose() * gy;
        } else {
          dcol.noalias() = w.transpose() * gy;
          col2im(dcol.data(), g, gin[0]->raw() + b * in_plane);
        }
      }
      if (gin.size() > 2 && gin[2])
        gin[2]->data() += gy.rowwise().sum().array();
    }
  };
  return tape.record("conv2d", inputs, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> transposed_conv2d(Var<Scalar> x, Var<Scalar> weight, const Conv2dSpec& spec,
                              std::optional<Var<Scalar>> bias) {
  check_spec(spec);
  check_bias(bias, spec);
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("transposed_conv2d expects B x C x H x W input");
  if (vx.dim(1) != spec.in_channels)
    throw std::invalid_argument("transposed_conv2d channel mismatch");
  const Shape wshape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel};
  if (weight.shape() != wshape)
    throw std::invalid_argument("transposed_conv2d weight shape " + shape_string(weight.shape()) +
                                " expected " + shape_string(wshape));
  const Index batch = vx.dim(0), in_h = vx.dim(2), in_w = vx.dim(3);
  const Index out_h = spec.transposed_output_extent(in_h);
  const Index out_w = spec.transposed_output_extent(in_w);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("transposed_conv2d: invalid geometry");

  // Geometry of the forward convolution that maps the output back onto x.
  const Geometry g{spec.out_channels, out_h, out_w, spec.kernel, spec.stride,
                   spec.dilation,     spec.padding, in_h,  in_w};
  if (Conv2dSpec{spec.out_channels, spec.in_channels, spec.kernel, spec.stride, spec.dilation,
                 spec.padding}
          .output_extent(out_h) != in_h)
    throw std::invalid_argument("transposed_conv2d: geometry is not invertible");

  const Index in_ch = spec.in_channels;
  const Index in_plane = in_ch * in_h * in_w;
  const Index out_plane = spec.out_channels * out_h * out_w;
  Tensor<Scalar> out({batch, spec.out_channels, out_h, out_w});
  CMapMat<Scalar> w(weight.value().raw(), in_ch, g.rows());
  RowMat<Scalar> col(g.rows(), g.cols());
  for (Index b = 0; b < batch; ++b) {
    col.noalias() = w.transpose() * CMapMat<Scalar>(vx.raw() + b * in_plane, in_ch, g.cols());
    col2im(col.data(), g, out.raw() + b * out_plane);
    if (bias) {
      MapMat<Scalar> y(out.raw() + b * out_plane, spec.out_channels, out_h * out_w);
      y.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias->value().raw(),
                                                                                spec.out_channels);
    }
  }

  Tape<Scalar>& tape = *x.tape;
  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const std::size_t idx = x.id, idw = weight.id;
  const Index out_ch = spec.out_channels;
  auto backward = [&tape, idx, idw, g, batch, in_ch, out_ch, in_plane, out_plane](
                      const Tensor<Scalar>& grad, std::vector<Tensor<Scalar>*>& gin) {
    const auto& xv = tape.value(idx);
    CMapMat<Scalar> w(tape.value(idw).raw(), in_ch, g.rows());
    RowMat<Scalar> col(g.rows(), g.cols());
    for (Index b = 0; b < batch; ++b) {
      im2col(grad.raw() + b * out_plane, g, col.data());
      if (gin[0])
        MapMat<Scalar>(gin[0]->raw() + b * in_plane, in_ch, g.cols()).noalias() += w * col;
      if (gin[1])
        MapMat<Scalar>(gin[1]->raw(), in_ch, g.rows()).noalias() +=
            CMapMat<Scalar>(xv.raw() + b * in_plane, in_ch, g.cols()) * col.transpose();
      if (gin.size() > 2 && gin[2])
        gin[2]->data() += CMapMat<Scalar>(grad.raw() + b * out_plane, out_ch, g.height * g.width)
                              .rowwise()
                              .sum()
                              .array();
    }
  };
  return tape.record("transposed_conv2d", inputs, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchNormState<Scalar>& state,
                       Mode mode) {
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("batch_norm expects B x C x H x W input");
  const Index batch = vx.dim(0), channels = vx.dim(1), plane = vx.dim(2) * vx.dim(3);
  const Shape cshape{channels};
  if (gamma.shape() != cshape || beta.shape() != cshape || state.running_mean.shape() != cshape ||
      state.running_var.shape() != cshape)
    throw std::invalid_argument("batch_norm parameter shapes do not match " + std::to_string(channels) +
                                " channels");
  if (mode == Mode::train && batch < 2) throw std::invalid_argument("batch_norm: train mode needs batch >= 2");

  const Index count = batch * plane;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean(channels), inv_std(channels);
  if (mode == Mode::train) {
    for (Index c = 0; c < channels; ++c) {
      Scalar s = 0;
      for (Index b = 0; b < batch; ++b)
        s += vx.data().segment((b * channels + c) * plane, plane).sum();
      const Scalar mu = s / static_cast<Scalar>(count);
      Scalar ss = 0;
      for (Index b = 0; b < batch; ++b)
        ss += (vx.data().segment((b * channels + c) * plane, plane) - mu).square().sum();
      const Scalar var = ss / static_cast<Scalar>(count);
      mean[c] = mu;
      inv_std[c] = Scalar(1) / std::sqrt(var + state.epsilon);
      const Scalar unbiased = ss / static_cast<Scalar>(count - 1);
      state.running_mean[c] = (Scalar(1) - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] = (Scalar(1) - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    mean = state.running_mean.data();
    inv_std = (state.running_var.data() + state.epsilon).rsqrt();
  }

  Tensor<Scalar> out(vx.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * plane;
      out.data().segment(off, plane) =
          (vx.data().segment(off, plane) - mean[c]) * (inv_std[c] * gv[c]) + bv[c];
    }

  Tape<Scalar>& tape = *x.tape;
  const std::size_t idx = x.id, idg = gamma.id;
  const bool train = mode == Mode::train;
  auto backward = [&tape, idx, idg, train, batch, channels, plane, count, mean, inv_std](
                      const Tensor<Scalar>& grad, std::vector<Tensor<Scalar>*>& gin) {
    const auto& xv = tape.value(idx).data();
    const auto& gv = tape.value(idg);
    for (Index c = 0; c < channels; ++c) {
      Scalar sum_dy = 0, sum_dy_xhat = 0;
      for (Index b = 0; b < batch; ++b) {
        const Index off = (b * channels + c) * plane;
        const auto dy = grad.data().segment(off, plane);
        sum_dy += dy.sum();
        sum_dy_xhat += (dy * (xv.segment(off, plane) - mean[c])).sum() * inv_std[c];
      }
      if (gin[1]) (*gin[1])[c] += sum_dy_xhat;
      if (gin[2]) (*gin[2])[c] += sum_dy;
      if (!gin[0]) continue;
      const Scalar k = gv[c] * inv_std[c];
      const Scalar n = static_cast<Scalar>(count);
      for (Index b = 0; b < batch; ++b) {
        const Index off = (b * channels + c) * plane;
        auto dx = gin[0]->data().segment(off, plane);
        const auto dy = grad.data().segment(off, plane);
        if (train) {
          const auto xhat = (xv.segment(off, plane) - mean[c]) * inv_std[c];
          dx += (k / n) * (n * dy - sum_dy - xhat * sum_dy_xhat);
        } else {
          dx += k * dy;
        }
      }
    }
  };
  return tape.record("batch_norm", {x, gamma, beta}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> avg_pool2d(Var<Scalar> x, Index kernel, Index stride, Index padding) {
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("avg_pool2d expects B x C x H x W input");
  if (kernel < 1 || stride < 1 || padding < 0 || padding >= kernel)
    throw std::invalid_argument("avg_pool2d: invalid geometry");
  const Index planes = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);
  const Index oh = (h + 2 * padding - kernel) / stride + 1;
  const Index ow = (w + 2 * padding - kernel) / stride + 1;
  if (h + 2 * padding < kernel || w + 2 * padding < kernel || oh < 1 || ow < 1)
    throw std::invalid_argument("avg_pool2d: output extent below 1");

  // Clipped window bounds per output row / column.
  auto bounds = [kernel, stride, padding](Index o, Index extent) {
    const Index lo = std::max<Index>(o * stride - padding, 0);
    const Index hi = std::min<Index>(o * stride - padding + kernel, extent);
    return std::pair<Index, Index>{lo, hi};
  };

  Tensor<Scalar> out({vx.dim(0), vx.dim(1), oh, ow});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = vx.raw() + p * h * w;
    Scalar* dst = out.raw() + p * oh * ow;
    for (Index i = 0; i < oh; ++i) {
      const auto [r0, r1] = bounds(i, h);
      for (Index j = 0; j < ow; ++j) {
        const auto [c0, c1] = bounds(j, w);
        Scalar s = 0;
        for (Index r = r0; r < r1; ++r)
          for (Index c = c0; c < c1; ++c) s += src[r * w + c];
        dst[i * ow + j] = s / static_cast<Scalar>((r1 - r0) * (c1 - c0));
      }
    }
  }

  auto backward = [planes, h, w, oh, ow, bounds](const Tensor<Scalar>& grad,
                                                 std::vector<Tensor<Scalar>*>& gin) {
    if (!gin[0]) return;
    for (Index p = 0; p < planes; ++p) {
      const Scalar* g = grad.raw() + p * oh * ow;
      Scalar* dst = gin[0]->raw() + p * h * w;
      for (Index i = 0; i < oh; ++i) {
        const auto [r0, r1] = bounds(i, h);
        for (Index j = 0; j < ow; ++j) {
          const auto [c0, c1] = bounds(j, w);
          const Scalar share = g[i * ow + j] / static_cast<Scalar>((r1 - r0) * (c1 - c0));
          for (Index r = r0; r < r1; ++r)
            for (Index c = c0; c < c1; ++c) dst[r * w + c] += share;
        }
      }
    }
  };
  return x.tape->record("avg_pool2d", {x}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> global_avg_pool(Var<Scalar> x) {
  if (x.value().rank() != 4) throw std::invalid_argument("global_avg_pool expects B x C x H x W input");
  return reduce(ReduceKind::mean, x, {2, 3}, true);
}

template <typename Scalar>
Var<Scalar> bilinear_resize(Var<Scalar> x, Index out_h, Index out_w) {
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("bilinear_resize expects B x C x H x W input");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output extent below 1");
  const Index planes = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);

  struct Tap {
    Index lo, hi;
    Scalar frac;
  };
  auto taps = [](Index out, Index in) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
      const Index lo = std::min<Index>(static_cast<Index>(src), in - 1);
      const Index hi = std::min<Index>(lo + 1, in - 1);
      t[static_cast<std::size_t>(o)] = Tap{lo, hi, static_cast<Scalar>(src - static_cast<double>(lo))};
    }
    return t;
  };
  const auto ty = taps(out_h, h);
  const auto tx = taps(out_w, w);

  Tensor<Scalar> out({vx.dim(0), vx.dim(1), out_h, out_w});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = vx.raw() + p * h * w;
    Scalar* dst = out.raw() + p * out_h * out_w;
    for (Index i = 0; i < out_h; ++i) {
      const Tap& a = ty[static_cast<std::size_t>(i)];
      for (Index j = 0; j < out_w; ++j) {
        const Tap& b = tx[static_cast<std::size_t>(j)];
        const Scalar top = src[a.lo * w + b.lo] * (1 - b.frac) + src[a.lo * w + b.hi] * b.frac;
        const Scalar bot = src[a.hi * w + b.lo] * (1 - b.frac) + src[a.hi * w + b.hi] * b.frac;
        dst[i * out_w + j] = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }

  auto backward = [planes, h, w, out_h, out_w, ty, tx](const Tensor<Scalar>& grad,
                                                       std::vector<Tensor<Scalar>*>& gin) {
    if (!gin[0]) return;
    for (Index p = 0; p < planes; ++p) {
      const Scalar* g = grad.raw() + p * out_h * out_w;
      Scalar* dst = gin[0]->raw() + p * h * w;
      for (Index i = 0; i < out_h; ++i) {
        const Tap& a = ty[static_cast<std::size_t>(i)];
        for (Index j = 0; j < out_w; ++j) {
          const Tap& b = tx[static_cast<std::size_t>(j)];
          const Scalar v = g[i * out_w + j];
          dst[a.lo * w + b.lo] += v * (1 - a.frac) * (1 - b.frac);
          dst[a.lo * w + b.hi] += v * (1 - a.frac) * b.frac;
          dst[a.hi * w + b.lo] += v * a.frac * (1 - b.frac);
          dst[a.hi * w + b.hi] += v * a.frac * b.frac;
        }
      }
    }
  };
  return x.tape->record("bilinear_resize", {x}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> spatial_softmax(Var<Scalar> x) {
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("spatial_softmax expects B x C x H x W input");
  const Index planes = vx.dim(0) * vx.dim(1), area = vx.dim(2) * vx.dim(3);
  Tensor<Scalar> out(vx.shape());
  for (Index p = 0; p < planes; ++p) {
    const auto in = vx.data().segment(p * area, area);
    auto y = out.data().segment(p * area, area);
    y = (in - in.maxCoeff()).exp();
    y /= y.sum();
  }
  const std::size_t id_out = x.tape->size();
  Tape<Scalar>& tape = *x.tape;
  auto backward = [&tape, id_out, planes, area](const Tensor<Scalar>& grad,
                                                std::vector<Tensor<Scalar>*>& gin) {
    if (!gin[0]) return;
    const auto& yv = tape.value(id_out).data();
    for (Index p = 0; p < planes; ++p) {
      const auto y = yv.segment(p * area, area);
      const auto g = grad.data().segment(p * area, area);
      const Scalar dot = (g * y).sum();
      gin[0]->data().segment(p * area, area) += y * (g - dot);
    }
  };
  return tape.record("spatial_softmax", {x}, std::move(out), backward);
}

template <typename Scalar>
Var<Scalar> stacked_pool(Var<Scalar> x, Index stages, bool include_input) {
  if (stages < 1) throw std::invalid_argument("stacked_pool: stages must be >= 1");
  Var<Scalar> pooled = avg_pool2d(x, 3, 1, 1);
  Var<Scalar> acc = include_input ? add(x, pooled) : pooled;
  for (Index s = 1; s < stages; ++s) {
    pooled = avg_pool2d(pooled, 3, 1, 1);
    acc = add(acc, pooled);
  }
  return acc;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> orthogonal_init(Index rows, Index cols,
                                                                      std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("orthogonal_init: zero dimension");
  const Index tall = std::max(rows, cols), thin = std::min(rows, cols);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(tall, thin);
  for (Index j = 0; j < thin; ++j)
    for (Index i = 0; i < tall; ++i) a(i, j) = normal(rng);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, thin);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(thin).template triangularView<Eigen::Upper>();
  for (Index j = 0; j < thin; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (tall == thin && q.determinant() < 0) q.col(0) *= -1.0;

  Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  return w.cast<Scalar>();
}

#define DSF_INSTANTIATE_LAYERS(S)                                                                   \
  template Var<S> conv2d<S>(Var<S>, Var<S>, const Conv2dSpec&, std::optional<Var<S>>);              \
  template Var<S> transposed_conv2d<S>(Var<S>, Var<S>, const Conv2dSpec&, std::optional<Var<S>>);   \
  template Var<S> batch_norm<S>(Var<S>, Var<S>, Var<S>, BatchNormState<S>&, Mode);                  \
  template Var<S> avg_pool2d<S>(Var<S>, Index, Index, Index);                                       \
  template Var<S> global_avg_pool<S>(Var<S>);                                                       \
  template Var<S> bilinear_resize<S>(Var<S>, Index, Index);                                         \
  template Var<S> spatial_softmax<S>(Var<S>);                                                       \
  template Var<S> stacked_pool<S>(Var<S>, Index, bool);                                             \
  template Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> orthogonal_init<S>(Index, Index, std::uint64_t);

DSF_INSTANTIATE_LAYERS(float)
DSF_INSTANTIATE_LAYERS(double)

}  // namespace dsf
