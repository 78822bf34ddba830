#pragma once

#include "dsfnet/autograd.hpp"
#include "dsfnet/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>

namespace dsf {

enum class Mode { train, eval };

/// Side of the square field covered by an n x n kernel with dilation r: (n-1)r + 1.
constexpr Index effective_kernel_size(Index kernel, Index dilation) { return (kernel - 1) * dilation + 1; }

struct Conv2dSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel = 3;
  Index stride = 1;
  Index dilation = 1;
  Index padding = 0;
  bool has_bias = false;

  /// Padding r(n-1)/2, which keeps the extent at stride 1.
  static Conv2dSpec same(Index in, Index out, Index kernel, Index dilation = 1, Index stride = 1) {
    return Conv2dSpec{in, out, kernel, stride, dilation, dilation * (kernel - 1) / 2, false};
  }

  Index effective_kernel() const { return effective_kernel_size(kernel, dilation); }
  Index output_extent(Index in) const { return (in + 2 * padding - effective_kernel()) / stride + 1; }
  Index transposed_output_extent(Index in) const {
    return (in - 1) * stride - 2 * padding + effective_kernel();
  }
  Shape weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
  Index weight_count() const { return out_channels * in_channels * kernel * kernel; }
};

// x: B x in x H x W, weight: out x in x n x n, bias: out.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, const Conv2dSpec& spec,
                   std::optional<Var<Scalar>> bias = std::nullopt);

// Adjoint of conv2d. x: B x in x H x W, weight: in x out x n x n (the conv2d weight of the
// reverse mapping). Output extent (H-1)*stride - 2*pad + (n-1)*dilation + 1.
template <typename Scalar>
Var<Scalar> transposed_conv2d(Var<Scalar> x, Var<Scalar> weight, const Conv2dSpec& spec,
                              std::optional<Var<Scalar>> bias = std::nullopt);

template <typename Scalar>
struct BatchNormState {
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar epsilon = Scalar(1e-5);

  static BatchNormState make(Index channels) {
    return {Tensor<Scalar>::zeros({channels}), Tensor<Scalar>::constant({channels}, Scalar(1))};
  }
};

/// Per-channel normalization followed by the affine map gamma, beta. Train mode uses
/// batch statistics and updates `state`; eval mode reads only the running statistics.
template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchNormState<Scalar>& state,
                       Mode mode);

// Average over in-bounds taps only (padding is not counted).
template <typename Scalar>
Var<Scalar> avg_pool2d(Var<Scalar> x, Index kernel, Index stride, Index padding);

template <typename Scalar>
Var<Scalar> global_avg_pool(Var<Scalar> x);

// Half-pixel centers (align_corners = false), source coordinates clamped to the border.
template <typename Scalar>
Var<Scalar> bilinear_resize(Var<Scalar> x, Index out_h, Index out_w);

// Softmax over the H x W positions of each (batch, channel) plane, max-subtracted.
template <typename Scalar>
Var<Scalar> spatial_softmax(Var<Scalar> x);

/// x + p(x) + p(p(x)) + ... with p a 3x3 stride-1 average pool; `stages` pooled terms.
template <typename Scalar>
Var<Scalar> stacked_pool(Var<Scalar> x, Index stages, bool include_input = true);

/// Semi-orthogonal rows x cols matrix from a seeded Gaussian draw: orthonormal columns when
/// tall, orthonormal rows when wide, a proper rotation (det +1) when square.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> orthogonal_init(Index rows, Index cols,
                                                                      std::uint64_t seed);

}  // namespace dsf
