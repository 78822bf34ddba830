#include "dsfnet/attention.hpp"

#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dsf {

void AttentionConfig::validate() const {
  if (channels < 1 || levels < 1 || reduction < 1 || pool_stages < 0)
    throw std::invalid_argument("invalid attention configuration");
}

template <typename Scalar>
Var<Scalar> downsample2x(Var<Scalar> x) {
  const auto& vx = x.value();
  if (vx.rank() != 4) throw std::invalid_argument("downsample2x expects B x C x H x W input");
  const Index planes = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);
  if (h < 2 && w < 2) throw std::invalid_argument("downsample2x: extent would fall below 1");
  const Index oh = (h + 1) / 2, ow = (w + 1) / 2;

  Tensor<Scalar> out({vx.dim(0), vx.dim(1), oh, ow});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = vx.raw() + p * h * w;
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j) {
        Scalar s = 0;
        Index n = 0;
        for (Index r = 2 * i; r < std::min(2 * i + 2, h); ++r)
          for (Index c = 2 * j; c < std::min(2 * j + 2, w); ++c, ++n) s += src[r * w + c];
        out.raw()[(p * oh + i) * ow + j] = s / static_cast<Scalar>(n);
      }
  }
  auto backward = [planes, h, w, oh, ow](const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
    if (!gin[0]) return;
    for (Index p = 0; p < planes; ++p) {
      Scalar* dst = gin[0]->raw() + p * h * w;
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          const Index r1 = std::min(2 * i + 2, h), c1 = std::min(2 * j + 2, w);
          const Scalar share = g.raw()[(p * oh + i) * ow + j] / static_cast<Scalar>((r1 - 2 * i) * (c1 - 2 * j));
          for (Index r = 2 * i; r < r1; ++r)
            for (Index c = 2 * j; c < c1; ++c) dst[r * w + c] += share;
        }
    }
  };
  return x.tape->record("downsample2x", {x}, std::move(out), backward);
}

template <typename Scalar>
std::vector<Var<Scalar>> multiscale_downsample(Var<Scalar> x, Index levels) {
  if (levels < 1) throw std::invalid_argument("multiscale_downsample: levels must be >= 1");
  std::vector<Var<Scalar>> out;
  Var<Scalar> cur = x;
  for (Index n = 0; n < levels; ++n) {
    if (cur.shape()[2] < 2 || cur.shape()[3] < 2)
      throw std::invalid_argument("multiscale_downsample: level " + std::to_string(n + 1) +
                                  " would fall below extent 1");
    cur = downsample2x(cur);
    out.push_back(cur);
  }
  return out;
}

template <typename Scalar>
Var<Scalar> attention_map(Var<Scalar> level, Var<Scalar> projection) {
  const Index channels = level.shape().at(1);
  if (projection.shape() != Shape{1, channels, 1, 1})
    throw std::invalid_argument("attention projection must map " + std::to_string(channels) + " channels to 1");
  return spatial_softmax(conv2d(level, projection, Conv2dSpec{channels, 1, 1, 1, 1, 0, false}));
}

template <typename Scalar>
std::vector<Var<Scalar>> attention_pyramid(ParamBinding<Scalar>& params, const std::string& prefix,
                                           const AttentionConfig& cfg, Var<Scalar> x, Mode mode) {
  cfg.validate();
  std::vector<Var<Scalar>> maps;
  const auto levels = multiscale_downsample(x, cfg.levels);
  for (std::size_t n = 0; n < levels.size(); ++n) {
    const std::string lp = prefix + ".level" + std::to_string(n + 1);
    auto feat = cfg.pool_stages > 0 ? stacked_pool(levels[n], cfg.pool_stages) : levels[n];
    feat = params.batch_norm(lp + ".bn", feat, mode);
    const Conv2dSpec proj{cfg.channels, 1, 1, 1, 1, 0, false};
    maps.push_back(spatial_softmax(relu(conv2d(feat, params(lp + ".projection"), proj))));
  }
  return maps;
}

namespace {

template <typename Scalar>
std::vector<Var<Scalar>> upsampled(Var<Scalar> x, const std::vector<Var<Scalar>>& maps) {
  if (maps.empty()) throw std::invalid_argument("attention_fuse: no attention maps");
  const Index h = x.shape().at(2), w = x.shape().at(3);
  std::vector<Var<Scalar>> out;
  for (const auto& m : maps) {
    if (m.shape().size() != 4 || m.shape()[0] != x.shape()[0] || m.shape()[1] != 1)
      throw std::invalid_argument("attention_fuse: map shape " + shape_string(m.shape()) +
                                  " does not fit input " + shape_string(x.shape()));
    out.push_back(m.shape()[2] == h && m.shape()[3] == w ? m : bilinear_resize(m, h, w));
  }
  return out;
}

}  // namespace

template <typename Scalar>
Var<Scalar> attention_fuse_term_a(Var<Scalar> x, const std::vector<Var<Scalar>>& maps) {
  const auto up = upsampled(x, maps);
  Var<Scalar> acc = mul(up.front(), x);
  for (std::size_t n = 1; n < up.size(); ++n) acc = add(acc, mul(up[n], x));
  return scale(acc, Scalar(1) / static_cast<Scalar>(up.size()));
}

template <typename Scalar>
Var<Scalar> attention_fuse(Var<Scalar> x, const std::vector<Var<Scalar>>& maps) {
  const auto up = upsampled(x, maps);
  Var<Scalar> acc = mul(add_scalar(up.front(), Scalar(1)), x);
  for (std::size_t n = 1; n < up.size(); ++n) acc = add(acc, mul(add_scalar(up[n], Scalar(1)), x));
  return scale(acc, Scalar(1) / static_cast<Scalar>(up.size()));
}

template <typename Scalar>
Var<Scalar> channel_weight(ParamBinding<Scalar>& params, const std::string& prefix, Var<Scalar> f) {
  const auto w2 = params(prefix + ".w2");
  const auto w1 = params(prefix + ".w1");
  const Index channels = f.shape().at(1), hidden = w2.shape().at(0);
  const auto z = global_avg_pool(f);
  const auto squeezed = relu(conv2d(z, w2, Conv2dSpec{channels, hidden, 1, 1, 1, 0, false}));
  const auto r = sigmoid(conv2d(squeezed, w1, Conv2dSpec{hidden, channels, 1, 1, 1, 0, false}));
  return mul(f, r);
}

template <typename Scalar>
Var<Scalar> spatial_weight(ParamBinding<Scalar>& params, const std::string& prefix, Var<Scalar> f) {
  const Index channels = f.shape().at(1);
  const auto t = sigmoid(conv2d(f, params(prefix + ".w3"), Conv2dSpec{channels, 1, 1, 1, 1, 0, false}));
  return mul(f, t);
}

template <typename Scalar>
Var<Scalar> enhance(ParamBinding<Scalar>& params, const std::string& prefix, Var<Scalar> f) {
  return add(channel_weight(params, prefix, f), spatial_weight(params, prefix, f));
}

template <typename Scalar>
void attention_init_params(ParameterStore<Scalar>& store, const std::string& prefix,
                           const AttentionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Index c = cfg.channels, hidden = cfg.hidden_channels();
  for (Index n = 1; n <= cfg.levels; ++n) {
    const std::string lp = prefix + ".level" + std::to_string(n);
    store.add_batch_norm(lp + ".bn", c);
    store.add(lp + ".projection", gaussian_tensor<Scalar>({1, c, 1, 1}, std::sqrt(1.0 / static_cast<double>(c)),
                                                          derive_seed(seed, lp + ".projection")));
  }
  const std::string wp = prefix + ".weighting";
  store.add(wp + ".w2", gaussian_tensor<Scalar>({hidden, c, 1, 1}, std::sqrt(2.0 / static_cast<double>(c)),
                                                derive_seed(seed, wp + ".w2")));
  store.add(wp + ".w1", gaussian_tensor<Scalar>({c, hidden, 1, 1}, std::sqrt(1.0 / static_cast<double>(hidden)),
                                                derive_seed(seed, wp + ".w1")));
  store.add(wp + ".w3", gaussian_tensor<Scalar>({1, c, 1, 1}, std::sqrt(1.0 / static_cast<double>(c)),
                                                derive_seed(seed, wp + ".w3")));
}

template <typename Scalar>
Var<Scalar> pyramid_attention(ParamBinding<Scalar>& params, const std::string& prefix,
                              const AttentionConfig& cfg, Var<Scalar> x, Mode mode) {
  const auto maps = attention_pyramid(params, prefix, cfg, x, mode);
  return enhance(params, prefix + ".weighting", attention_fuse(x, maps));
}

#define DSF_INSTANTIATE_ATTENTION(S)                                                                        \
  template Var<S> downsample2x<S>(Var<S>);                                                                  \
  template std::vector<Var<S>> multiscale_downsample<S>(Var<S>, Index);                                     \
  template Var<S> attention_map<S>(Var<S>, Var<S>);                                                         \
  template std::vector<Var<S>> attention_pyramid<S>(ParamBinding<S>&, const std::string&,                   \
                                                    const AttentionConfig&, Var<S>, Mode);                  \
  template Var<S> attention_fuse_term_a<S>(Var<S>, const std::vector<Var<S>>&);                             \
  template Var<S> attention_fuse<S>(Var<S>, const std::vector<Var<S>>&);                                    \
  template Var<S> channel_weight<S>(ParamBinding<S>&, const std::string&, Var<S>);                          \
  template Var<S> spatial_weight<S>(ParamBinding<S>&, const std::string&, Var<S>);                          \
  template Var<S> enhance<S>(ParamBinding<S>&, const std::string&, Var<S>);                                 \
  template void attention_init_params<S>(ParameterStore<S>&, const std::string&, const AttentionConfig&,    \
                                         std::uint64_t);                                                    \
  template Var<S> pyramid_attention<S>(ParamBinding<S>&, const std::string&, const AttentionConfig&, Var<S>, \
                                       Mode);

DSF_INSTANTIATE_ATTENTION(float)
DSF_INSTANTIATE_ATTENTION(double)

}  // namespace dsf
