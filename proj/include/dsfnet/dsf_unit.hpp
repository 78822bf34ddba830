#pragma once

#include "dsfnet/autograd.hpp"
#include "dsfnet/layers.hpp"
#include "dsfnet/parameters.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsf {

/// One dilated scale-wise fusion unit: a 1x1 instant convolution M -> N/K, then K
/// parallel n x n convolutions N/K -> N/K with dilation 2^(k-1), optional stepwise
/// fusion, channel concatenation to N, optional residual, BN and ReLU.
struct DsfConfig {
  Index in_channels = 8;    // M
  Index out_channels = 8;   // N
  Index width_divider = 4;  // K, also the branch count
  Index kernel = 3;         // n, odd
  Index stride = 1;         // 1 for learning units, 2 for down-sampling units
  bool residual = false;    // requires M == N and stride 1
  bool sff = true;
  bool batch_norm = true;   // false bypasses BN (ReLU still applies)
  // Added to every branch dilation. Only for mutation tests of the oracles.
  Index dilation_offset = 0;

  void validate() const;
  Index branch_width() const { return out_channels / width_divider; }
  Index dilation(Index branch) const { return (Index{1} << branch) + dilation_offset; }  // branch is 0-based
  Conv2dSpec instant_spec() const { return Conv2dSpec{in_channels, branch_width(), 1, 1, 1, 0, false}; }
  Conv2dSpec branch_spec(Index branch) const {
    return Conv2dSpec::same(branch_width(), branch_width(), kernel, dilation(branch), stride);
  }
};

/// M*N/K + n^2*N^2/K: instant weights plus K branches of (N/K)^2 * n^2.
Index dsf_param_count(const DsfConfig& cfg);

/// n^2 * M * N for an ordinary n x n convolution.
Index standard_conv_param_count(Index in_channels, Index out_channels, Index kernel);

/// n^2 M K / (M + n^2 N), the claimed ratio of ordinary to factorized parameter counts.
double dsf_reduction_factor(Index in_channels, Index out_channels, Index width_divider, Index kernel);

/// Side of the receptive field of the widest branch: (n-1) 2^(K-1) + 1.
Index dsf_receptive_field(Index kernel, Index width_divider);

/// Registers the unit's weights (and BN state) under `prefix`. With `rotation_init` the
/// instant convolution starts as a semi-orthogonal matrix, otherwise He-Gaussian.
template <typename Scalar>
void dsf_init_params(ParameterStore<Scalar>& store, const std::string& prefix, const DsfConfig& cfg,
                     std::uint64_t seed, bool rotation_init = true);

/// s_1 = b_1, s_k = s_(k-1) + b_k.
template <typename Scalar>
std::vector<Var<Scalar>> sff_merge(const std::vector<Var<Scalar>>& branches);

/// Instant conv, branches, optional fusion and concatenation. No residual, BN or ReLU.
template <typename Scalar>
Var<Scalar> dsf_pyramid(ParamBinding<Scalar>& params, const std::string& prefix, const DsfConfig& cfg,
                        Var<Scalar> x);

template <typename Scalar>
Var<Scalar> dsf_forward(ParamBinding<Scalar>& params, const std::string& prefix, const DsfConfig& cfg,
                        Var<Scalar> x, Mode mode);

}  // namespace dsf
