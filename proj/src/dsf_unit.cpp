#include "dsfnet/dsf_unit.hpp"

#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dsf {

void DsfConfig::validate() const {
  if (width_divider < 1) throw std::invalid_argument("DSF: K must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("DSF: channel counts must be >= 1");
  if (out_channels % width_divider != 0)
    throw std::invalid_argument("DSF: N=" + std::to_string(out_channels) + " not divisible by K=" +
                                std::to_string(width_divider));
  if (kernel < 3 || kernel % 2 == 0) throw std::invalid_argument("DSF: kernel must be odd and >= 3");
  if (stride != 1 && stride != 2) throw std::invalid_argument("DSF: stride must be 1 or 2");
  if (residual && (in_channels != out_channels || stride != 1))
    throw std::invalid_argument("DSF: residual requires M == N and stride 1");
  if (dilation_offset < 0) throw std::invalid_argument("DSF: negative dilation offset");
}

Index dsf_param_count(const DsfConfig& cfg) {
  cfg.validate();
  const Index m = cfg.in_channels, n = cfg.out_channels, k = cfg.width_divider, s = cfg.kernel;
  return m * n / k + s * s * n * n / k;
}

Index standard_conv_param_count(Index in_channels, Index out_channels, Index kernel) {
  return kernel * kernel * in_channels * out_channels;
}

double dsf_reduction_factor(Index in_channels, Index out_channels, Index width_divider, Index kernel) {
  const double m = static_cast<double>(in_channels), n = static_cast<double>(out_channels);
  const double k = static_cast<double>(width_divider), s2 = static_cast<double>(kernel * kernel);
  return s2 * m * k / (m + s2 * n);
}

Index dsf_receptive_field(Index kernel, Index width_divider) {
  if (kernel < 3 || kernel % 2 == 0 || width_divider < 1)
    throw std::invalid_argument("dsf_receptive_field: need odd n >= 3 and K >= 1");
  return (kernel - 1) * (Index{1} << (width_divider - 1)) + 1;
}

template <typename Scalar>
void dsf_init_params(ParameterStore<Scalar>& store, const std::string& prefix, const DsfConfig& cfg,
                     std::uint64_t seed, bool rotation_init) {
  cfg.validate();
  const Index width = cfg.branch_width();
  const Shape instant_shape{width, cfg.in_channels, 1, 1};
  if (rotation_init) {
    const auto w = orthogonal_init<Scalar>(width, cfg.in_channels, derive_seed(seed, prefix + ".instant"));
    Tensor<Scalar> t(instant_shape);
    for (Index o = 0; o < width; ++o)
      for (Index i = 0; i < cfg.in_channels; ++i) t[o * cfg.in_channels + i] = w(o, i);
    store.add(prefix + ".instant.weight", std::move(t));
  } else {
    store.add(prefix + ".instant.weight",
              gaussian_tensor<Scalar>(instant_shape, std::sqrt(2.0 / static_cast<double>(cfg.in_channels)),
                                      derive_seed(seed, prefix + ".instant")));
  }
  const double fan_in = static_cast<double>(width * cfg.kernel * cfg.kernel);
  for (Index k = 0; k < cfg.width_divider; ++k) {
    const std::string name = prefix + ".branch" + std::to_string(k + 1) + ".weight";
    store.add(name, gaussian_tensor<Scalar>(cfg.branch_spec(k).weight_shape(), std::sqrt(2.0 / fan_in),
                                            derive_seed(seed, name)));
  }
  if (cfg.batch_norm) store.add_batch_norm(prefix + ".bn", cfg.out_channels);
}

template <typename Scalar>
std::vector<Var<Scalar>> sff_merge(const std::vector<Var<Scalar>>& branches) {
  std::vector<Var<Scalar>> merged;
  merged.reserve(branches.size());
  for (const auto& b : branches) {
    if (!merged.empty() && b.shape() != merged.front().shape())
      throw std::invalid_argument("sff_merge: branch shapes differ");
    merged.push_back(merged.empty() ? b : add(merged.back(), b));
  }
  return merged;
}

template <typename Scalar>
Var<Scalar> dsf_pyramid(ParamBinding<Scalar>& params, const std::string& prefix, const DsfConfig& cfg,
                        Var<Scalar> x) {
  cfg.validate();
  const auto reduced = conv2d(x, params(prefix + ".instant.weight"), cfg.instant_spec());
  std::vector<Var<Scalar>> branches;
  for (Index k = 0; k < cfg.width_divider; ++k)
    branches.push_back(
        conv2d(reduced, params(prefix + ".branch" + std::to_string(k + 1) + ".weight"), cfg.branch_spec(k)));
  if (cfg.sff) branches = sff_merge(branches);
  return branches.size() == 1 ? branches.front() : concat(branches, 1);
}

template <typename Scalar>
Var<Scalar> dsf_forward(ParamBinding<Scalar>& params, const std::string& prefix, const DsfConfig& cfg,
                        Var<Scalar> x, Mode mode) {
  auto y = dsf_pyramid(params, prefix, cfg, x);
  if (cfg.residual) y = add(y, x);
  if (cfg.batch_norm) y = params.batch_norm(prefix + ".bn", y, mode);
  return relu(y);
}

#define DSF_INSTANTIATE_UNIT(S)                                                                         \
  template void dsf_init_params<S>(ParameterStore<S>&, const std::string&, const DsfConfig&,            \
                                   std::uint64_t, bool);                                                \
  template std::vector<Var<S>> sff_merge<S>(const std::vector<Var<S>>&);                                \
  template Var<S> dsf_pyramid<S>(ParamBinding<S>&, const std::string&, const DsfConfig&, Var<S>);       \
  template Var<S> dsf_forward<S>(ParamBinding<S>&, const std::string&, const DsfConfig&, Var<S>, Mode);

DSF_INSTANTIATE_UNIT(float)
DSF_INSTANTIATE_UNIT(double)

}  // namespace dsf
