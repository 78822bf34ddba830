#include "dsfnet/model.hpp"

#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dsf {

void NetConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("NetConfig: in_channels must be >= 1");
  if (channels.size() < 2) throw std::invalid_argument("NetConfig: need a stem and at least one DSF stage");
  if (alpha < 1) throw std::invalid_argument("NetConfig: alpha must be >= 1");
  for (Index c : channels)
    if (c < 1) throw std::invalid_argument("NetConfig: channel counts must be >= 1");
  for (std::size_t s = 1; s < channels.size(); ++s)
    if (channels[s] % width_divider != 0)
      throw std::invalid_argument("NetConfig: stage " + std::to_string(s) + " width " +
                                  std::to_string(channels[s]) + " not divisible by K=" +
                                  std::to_string(width_divider));
  for (Index s = 1; s < stage_count(); ++s)
    for (const auto& u : stage_units(s)) u.validate();
  attention_config(channels.back()).validate();
}

std::vector<DsfConfig> NetConfig::stage_units(Index stage) const {
  std::vector<DsfConfig> units;
  const auto s = static_cast<std::size_t>(stage);
  DsfConfig down;
  down.in_channels = channels.at(s - 1);
  down.out_channels = channels.at(s);
  down.width_divider = width_divider;
  down.kernel = kernel;
  down.stride = 2;
  down.residual = false;
  down.sff = sff;
  units.push_back(down);
  for (Index r = 1; r < alpha; ++r) {
    DsfConfig same = down;
    same.in_channels = channels[s];
    same.stride = 1;
    same.residual = true;
    units.push_back(same);
  }
  return units;
}

std::vector<Index> NetConfig::decoder_channels() const {
  std::vector<Index> out{channels.back()};
  for (Index s = 0; s < stage_count(); ++s) out.push_back(std::max<Index>(1, out.back() / 2));
  return out;
}

AttentionConfig NetConfig::attention_config(Index c) const {
  return AttentionConfig{c, attention_levels, attention_reduction, pool_stages};
}

std::string unit_prefix(Index stage, Index unit) {
  return "encoder.stage" + std::to_string(stage) + ".unit" + std::to_string(unit);
}

namespace {

std::string attention_prefix(Index stage) { return "attention.stage" + std::to_string(stage); }

bool has_attention(const NetConfig& cfg, Index stage) {
  return cfg.attention && (cfg.attention_per_stage || stage == cfg.stage_count() - 1);
}

}  // namespace

template <typename Scalar>
Model<Scalar> build_network(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model<Scalar> model{cfg, {}};
  auto& p = model.params;

  const auto stem = cfg.stem_spec();
  p.add("encoder.stem.weight",
        gaussian_tensor<Scalar>(stem.weight_shape(), std::sqrt(2.0 / static_cast<double>(cfg.in_channels * 9)),
                                derive_seed(seed, "encoder.stem.weight")));
  p.add_batch_norm("encoder.stem.bn", cfg.channels.front());

  for (Index s = 1; s < cfg.stage_count(); ++s) {
    const auto units = cfg.stage_units(s);
    for (std::size_t u = 0; u < units.size(); ++u)
      dsf_init_params(p, unit_prefix(s, static_cast<Index>(u)), units[u], seed, cfg.rotation_init);
    if (has_attention(cfg, s))
      attention_init_params(p, attention_prefix(s), cfg.attention_config(cfg.channels[static_cast<std::size_t>(s)]),
                            seed);
  }

  const auto dec = cfg.decoder_channels();
  for (std::size_t d = 0; d + 1 < dec.size(); ++d) {
    const std::string name = "decoder.up" + std::to_string(d);
    p.add(name + ".weight", gaussian_tensor<Scalar>({dec[d], dec[d + 1], 2, 2},
                                                    std::sqrt(2.0 / static_cast<double>(dec[d])),
                                                    derive_seed(seed, name)));
    p.add_batch_norm(name + ".bn", dec[d + 1]);
  }
  p.add("head.weight", gaussian_tensor<Scalar>({1, dec.back(), 1, 1}, std::sqrt(1.0 / static_cast<double>(dec.back())),
                                               derive_seed(seed, "head.weight")));
  p.add("head.bias", Tensor<Scalar>::zeros({1}));
  return model;
}

template <typename Scalar>
SaliencyOutput<Scalar> forward(const NetConfig& cfg, ParamBinding<Scalar>& params, Var<Scalar> image, Mode mode) {
  const auto& shape = image.shape();
  if (shape.size() != 4 || shape[1] != cfg.in_channels)
    throw std::invalid_argument("forward: expected B x " + std::to_string(cfg.in_channels) + " x H x W, got " +
                                shape_string(shape));
  const Index h = shape[2], w = shape[3];
  if (h % cfg.extent_divisor() != 0 || w % cfg.extent_divisor() != 0)
    throw std::invalid_argument("forward: extents " + std::to_string(h) + "x" + std::to_string(w) +
                                " not divisible by " + std::to_string(cfg.extent_divisor()));

  auto x = conv2d(image, params("encoder.stem.weight"), cfg.stem_spec());
  x = relu(params.batch_norm("encoder.stem.bn", x, mode));
  for (Index s = 1; s < cfg.stage_count(); ++s) {
    const auto units = cfg.stage_units(s);
    for (std::size_t u = 0; u < units.size(); ++u)
      x = dsf_forward(params, unit_prefix(s, static_cast<Index>(u)), units[u], x, mode);
    if (has_attention(cfg, s))
      x = pyramid_attention(params, attention_prefix(s), cfg.attention_config(x.shape()[1]), x, mode);
  }

  const auto dec = cfg.decoder_channels();
  for (std::size_t d = 0; d + 1 < dec.size(); ++d) {
    const std::string name = "decoder.up" + std::to_string(d);
    x = transposed_conv2d(x, params(name + ".weight"), Conv2dSpec{dec[d], dec[d + 1], 2, 2, 1, 0, false});
    x = relu(params.batch_norm(name + ".bn", x, mode));
  }
  auto logits = conv2d(x, params("head.weight"), Conv2dSpec{dec.back(), 1, 1, 1, 1, 0, true},
                       std::optional<Var<Scalar>>(params("head.bias")));
  auto map = sigmoid(logits);
  if (map.shape()[2] != h || map.shape()[3] != w) map = bilinear_resize(map, h, w);
  return SaliencyOutput<Scalar>{logits, map};
}

template <typename Scalar>
FusedLoss<Scalar> fused_loss(Var<Scalar> target, Var<Scalar> saliency) {
  if (target.shape() != saliency.shape())
    throw std::invalid_argument("fused_loss: extent mismatch " + shape_string(target.shape()) + " vs " +
                                shape_string(saliency.shape()));
  const auto eps = static_cast<Scalar>(kProbabilityClamp);
  const auto s = clamp(saliency, eps, Scalar(1) - eps);
  const auto one_minus_s = add_scalar(-s, Scalar(1));
  const auto one_minus_g = add_scalar(-target, Scalar(1));
  const auto ll = add(mul(target, log(s)), mul(one_minus_g, log(one_minus_s)));
  const auto ce = -mean(ll);
  const auto mae = mean(abs(sub(saliency, target)));
  return {add(ce, mae), ce, mae};
}

template <typename Scalar>
Index encoder_conv_weight_count(const Model<Scalar>& model) {
  Index total = 0;
  for (const auto& p : model.params.entries()) {
    const auto& n = p.name;
    const bool conv = n.rfind("encoder.", 0) == 0 && n.size() > 7 && n.compare(n.size() - 7, 7, ".weight") == 0;
    if (conv) total += p.value.size();
  }
  return total;
}

#define DSF_INSTANTIATE_MODEL(S)                                                                  \
  template Model<S> build_network<S>(const NetConfig&, std::uint64_t);                            \
  template SaliencyOutput<S> forward<S>(const NetConfig&, ParamBinding<S>&, Var<S>, Mode);        \
  template FusedLoss<S> fused_loss<S>(Var<S>, Var<S>);                                            \
  template Index encoder_conv_weight_count<S>(const Model<S>&);

DSF_INSTANTIATE_MODEL(float)
DSF_INSTANTIATE_MODEL(double)

}  // namespace dsf
