#pragma once

#include "dsfnet/autograd.hpp"
#include "dsfnet/layers.hpp"
#include "dsfnet/parameters.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsf {

struct AttentionConfig {
  Index channels = 8;
  Index levels = 3;       // number of down-sampled scales
  Index reduction = 4;    // bottleneck ratio of the channel-weighting branch
  Index pool_stages = 1;  // stacked pooling depth applied to every level

  void validate() const;
  Index hidden_channels() const { return channels / reduction > 0 ? channels / reduction : 1; }
};

// 2x2 average down-sampling with ceil extents; trailing odd rows/columns average what exists.
template <typename Scalar>
Var<Scalar> downsample2x(Var<Scalar> x);

/// X^1..X^L, each half the extent of the previous one.
template <typename Scalar>
std::vector<Var<Scalar>> multiscale_downsample(Var<Scalar> x, Index levels);

/// Spatial softmax of the 1x1 projection C -> 1.
template <typename Scalar>
Var<Scalar> attention_map(Var<Scalar> level, Var<Scalar> projection);

/// Per-level pipeline: stacked pooling, BN, 1x1 projection, ReLU, spatial softmax.
template <typename Scalar>
std::vector<Var<Scalar>> attention_pyramid(ParamBinding<Scalar>& params, const std::string& prefix,
                                           const AttentionConfig& cfg, Var<Scalar> x, Mode mode);

/// (1/L) sum_n l~^n * X, the attention term without the identity path.
template <typename Scalar>
Var<Scalar> attention_fuse_term_a(Var<Scalar> x, const std::vector<Var<Scalar>>& maps);

/// (1/L) sum_n (1 + l~^n) * X with every map bilinearly up-sampled to X's extent.
template <typename Scalar>
Var<Scalar> attention_fuse(Var<Scalar> x, const std::vector<Var<Scalar>>& maps);

// F * sigmoid(W1 relu(W2 GAP(F))), scaling each channel.
template <typename Scalar>
Var<Scalar> channel_weight(ParamBinding<Scalar>& params, const std::string& prefix, Var<Scalar> f);

// F * sigmoid(W3 F), scaling each position.
template <typename Scalar>
Var<Scalar> spatial_weight(ParamBinding<Scalar>& params, const std::string& prefix, Var<Scalar> f);

template <typename Scalar>
Var<Scalar> enhance(ParamBinding<Scalar>& params, const std::string& prefix, Var<Scalar> f);

template <typename Scalar>
void attention_init_params(ParameterStore<Scalar>& store, const std::string& prefix,
                           const AttentionConfig& cfg, std::uint64_t seed);

/// enhance(attention_fuse(X, attention_pyramid(X))).
template <typename Scalar>
Var<Scalar> pyramid_attention(ParamBinding<Scalar>& params, const std::string& prefix,
                              const AttentionConfig& cfg, Var<Scalar> x, Mode mode);

}  // namespace dsf
