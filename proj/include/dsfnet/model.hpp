#pragma once

#include "dsfnet/attention.hpp"
#include "dsfnet/autograd.hpp"
#include "dsfnet/dsf_unit.hpp"
#include "dsfnet/layers.hpp"
#include "dsfnet/parameters.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsf {

/// Encoder-decoder layout. `channels[0]` is the output of the stem convolution;
/// every later entry is one stride-2 DSF stage followed by alpha-1 residual units.
struct NetConfig {
  Index in_channels = 3;
  std::vector<Index> channels{16, 64, 128};
  Index alpha = 2;
  Index width_divider = 4;
  Index kernel = 3;
  bool attention = true;
  bool attention_per_stage = false;
  Index attention_levels = 3;
  Index attention_reduction = 4;
  Index pool_stages = 1;
  bool sff = true;
  bool rotation_init = true;

  void validate() const;
  Index stage_count() const { return static_cast<Index>(channels.size()); }
  /// Input extents must be divisible by this.
  Index extent_divisor() const { return Index{1} << stage_count(); }
  Conv2dSpec stem_spec() const { return Conv2dSpec{in_channels, channels.front(), 3, 2, 1, 1, false}; }
  /// Units of DSF stage `stage` (1-based): one stride-2 unit then alpha-1 residual units.
  std::vector<DsfConfig> stage_units(Index stage) const;
  std::vector<Index> decoder_channels() const;
  AttentionConfig attention_config(Index channels) const;
};

template <typename Scalar>
struct Model {
  NetConfig config;
  ParameterStore<Scalar> params;
};

template <typename Scalar>
struct SaliencyOutput {
  Var<Scalar> logits;  // pre-sigmoid, decoder resolution
  Var<Scalar> map;     // sigmoid, resized to the input extent
};

template <typename Scalar>
struct FusedLoss {
  Var<Scalar> total;
  Var<Scalar> cross_entropy;
  Var<Scalar> mae;
};

inline constexpr double kProbabilityClamp = 1e-7;

std::string unit_prefix(Index stage, Index unit);

template <typename Scalar>
Model<Scalar> build_network(const NetConfig& cfg, std::uint64_t seed);

/// image: B x in_channels x H x W with H, W divisible by extent_divisor().
template <typename Scalar>
SaliencyOutput<Scalar> forward(const NetConfig& cfg, ParamBinding<Scalar>& params, Var<Scalar> image, Mode mode);

/// Binary cross entropy (probabilities clamped to [eps, 1-eps], mean over pixels) plus MAE.
template <typename Scalar>
FusedLoss<Scalar> fused_loss(Var<Scalar> target, Var<Scalar> saliency);

/// Number of weights in every encoder convolution (stem plus all DSF conv weights).
template <typename Scalar>
Index encoder_conv_weight_count(const Model<Scalar>& model);

}  // namespace dsf
