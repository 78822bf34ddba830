#include "dsfnet/verify.hpp"

#include "dsfnet/attention.hpp"
#include "dsfnet/gradcheck.hpp"
#include "dsfnet/model.hpp"
#include "dsfnet/ops.hpp"
#include "dsfnet/oracles.hpp"
#include "dsfnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace dsf {
namespace {

using V = Var<double>;
using T = Tensor<double>;
using Layer = std::function<V(V)>;

constexpr double kGradEpsilon = 1e-5;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << std::scientific << v;
  return os.str();
}

CheckResult result(std::string group, std::string name, bool pass, std::string detail) {
  return CheckResult{std::move(group), std::move(name), pass, std::move(detail)};
}

enum class InputKind { gaussian, positive, probability };

T make_input(const Shape& shape, InputKind kind, std::uint64_t seed) {
  switch (kind) {
    case InputKind::positive:
      return uniform_tensor<double>(shape, 0.5, 2.0, seed);
    case InputKind::probability:
      return uniform_tensor<double>(shape, 0.05, 0.95, seed);
    case InputKind::gaussian:
      break;
  }
  return gaussian_tensor<double>(shape, 1.0, seed);
}

// Random-weighted sum of the layer output, so every output element contributes.
GradCheckReport layer_error(const Layer& layer, const Shape& shape, std::uint64_t seed, InputKind kind = InputKind::gaussian) {
  const T x = make_input(shape, kind, derive_seed(seed, "input"));
  Shape out_shape;
  {
    Tape<double> tape;
    out_shape = layer(tape.leaf(x)).shape();
  }
  const T w = gaussian_tensor<double>(out_shape, 1.0, derive_seed(seed, "projection"));
  ScalarFn<double> f = [&](V v) { return sum(mul(layer(v), v.tape->constant(w))); };
  return finite_diff_report<double>(f, x, kGradEpsilon);
}

struct GradCase {
  std::string name;
  std::function<GradCheckReport(std::uint64_t)> error;
};

T constant_for(const Shape& s, std::uint64_t seed, const char* what) { return gaussian_tensor<double>(s, 1.0, derive_seed(seed, what)); }

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<GradCheckReport(std::uint64_t)> fn) {
    cases.push_back(GradCase{std::move(name), std::move(fn)});
  };
  auto simple = [&](std::string name, Shape shape, std::function<V(V, std::uint64_t)> fn,
                    InputKind kind = InputKind::gaussian) {
    add_case(std::move(name), [shape, fn, kind](std::uint64_t seed) {
      return layer_error([&](V x) { return fn(x, seed); }, shape, seed, kind);
    });
  };

  simple("add broadcast", {2, 3, 4},
         [](V x, std::uint64_t s) { return add(x, x.tape->constant(constant_for({3, 1}, s, "c"))); });
  simple("add broadcast (stretched operand)", {3, 1},
         [](V x, std::uint64_t s) { return add(x.tape->constant(constant_for({2, 3, 4}, s, "c")), x); });
  simple("sub", {3, 4}, [](V x, std::uint64_t s) { return sub(x.tape->constant(constant_for({4}, s, "c")), x); });
  simple("mul broadcast", {2, 1, 4},
         [](V x, std::uint64_t s) { return mul(x, x.tape->constant(constant_for({3, 1}, s, "c"))); });
  simple("maximum", {3, 4}, [](V x, std::uint64_t s) { return maximum(x, x.tape->constant(constant_for({3, 4}, s, "c"))); });
  simple("exp", {3, 4}, [](V x, std::uint64_t) { return exp(x); });
  simple("log", {3, 4}, [](V x, std::uint64_t) { return log(x); }, InputKind::positive);
  simple("sigmoid", {3, 4}, [](V x, std::uint64_t) { return sigmoid(x); });
  simple("relu", {3, 4}, [](V x, std::uint64_t) { return relu(x); });
  simple("abs", {3, 4}, [](V x, std::uint64_t) { return abs(x); });
  simple("neg", {3, 4}, [](V x, std::uint64_t) { return -x; });
  simple("matmul (left)", {3, 4}, [](V x, std::uint64_t s) { return matmul(x, x.tape->constant(constant_for({4, 5}, s, "c"))); });
  simple("matmul (right)", {3, 4}, [](V x, std::uint64_t s) { return matmul(x.tape->constant(constant_for({2, 3}, s, "c")), x); });
  simple("reduce sum", {2, 3, 4}, [](V x, std::uint64_t) { return reduce(ReduceKind::sum, x, {1}, true); });
  simple("reduce mean", {2, 3, 4}, [](V x, std::uint64_t) { return reduce(ReduceKind::mean, x, {0, 2}); });
  simple("reduce max", {2, 3, 4}, [](V x, std::uint64_t) { return reduce(ReduceKind::max, x, {1}); });
  simple("scale", {3, 4}, [](V x, std::uint64_t) { return scale(x, 0.7); });
  simple("add_scalar", {3, 4}, [](V x, std::uint64_t) { return add_scalar(x, 1.5); });
  simple("clamp", {3, 4}, [](V x, std::uint64_t) { return clamp(x, -0.5, 0.5); });
  simple("reshape", {2, 6}, [](V x, std::uint64_t) { return reshape(x, {3, 4}); });
  simple("concat", {2, 3, 4},
         [](V x, std::uint64_t s) { return concat(std::vector<V>{x, x.tape->constant(constant_for({2, 2, 4}, s, "c")), x}, 1); });

  const Conv2dSpec strided{3, 4, 3, 2, 2, 2, true};
  simple("conv2d input", {2, 3, 9, 8}, [strided](V x, std::uint64_t s) {
    auto w = x.tape->constant(constant_for(strided.weight_shape(), s, "w"));
    return conv2d(x, w, strided, std::optional<V>(x.tape->constant(constant_for({4}, s, "b"))));
  });
  Conv2dSpec unbiased = strided;
  unbiased.has_bias = false;
  simple("conv2d weight", strided.weight_shape(), [unbiased](V w, std::uint64_t s) {
    return conv2d(w.tape->constant(constant_for({2, 3, 9, 8}, s, "x")), w, unbiased);
  });
  simple("conv2d bias", {4}, [strided](V b, std::uint64_t s) {
    auto& t = *b.tape;
    return conv2d(t.constant(constant_for({2, 3, 9, 8}, s, "x")), t.constant(constant_for(strided.weight_shape(), s, "w")),
                  strided, std::optional<V>(b));
  });
  const Conv2dSpec pointwise{5, 3, 1, 1, 1, 0, false};
  simple("conv2d 1x1 input", {2, 5, 4, 3}, [pointwise](V x, std::uint64_t s) {
    return conv2d(x, x.tape->constant(constant_for(pointwise.weight_shape(), s, "w")), pointwise);
  });
  simple("conv2d 1x1 weight", pointwise.weight_shape(), [pointwise](V w, std::uint64_t s) {
    return conv2d(w.tape->constant(constant_for({2, 5, 4, 3}, s, "x")), w, pointwise);
  });
  const Conv2dSpec up{3, 2, 3, 2, 1, 1, true};
  const Shape up_weight{3, 2, 3, 3};
  simple("transposed_conv2d input", {2, 3, 4, 5}, [up, up_weight](V x, std::uint64_t s) {
    return transposed_conv2d(x, x.tape->constant(constant_for(up_weight, s, "w")), up,
                             std::optional<V>(x.tape->constant(constant_for({2}, s, "b"))));
  });
  simple("transposed_conv2d weight", up_weight, [up](V w, std::uint64_t s) {
    Conv2dSpec spec = up;
    spec.has_bias = false;
    return transposed_conv2d(w.tape->constant(constant_for({2, 3, 4, 5}, s, "x")), w, spec);
  });
  const Conv2dSpec deconv{4, 2, 2, 2, 1, 0, false};
  simple("transposed_conv2d 2x2 stride 2", {2, 4, 3, 3}, [deconv](V x, std::uint64_t s) {
    return transposed_conv2d(x, x.tape->constant(constant_for({4, 2, 2, 2}, s, "w")), deconv);
  });

  simple("batch_norm train input", {3, 2, 4, 3}, [](V x, std::uint64_t s) {
    auto state = BatchNormState<double>::make(2);
    auto& t = *x.tape;
    return batch_norm(x, t.constant(make_input({2}, InputKind::positive, derive_seed(s, "g"))),
                      t.constant(constant_for({2}, s, "b")), state, Mode::train);
  });
  simple("batch_norm train gamma", {2}, [](V g, std::uint64_t s) {
    auto state = BatchNormState<double>::make(2);
    auto& t = *g.tape;
    return batch_norm(t.constant(constant_for({3, 2, 4, 3}, s, "x")), g, t.constant(constant_for({2}, s, "b")), state,
                      Mode::train);
  });
  simple("batch_norm eval input", {1, 2, 4, 3}, [](V x, std::uint64_t s) {
    BatchNormState<double> state{constant_for({2}, s, "m"), make_input({2}, InputKind::positive, derive_seed(s, "v"))};
    auto& t = *x.tape;
    return batch_norm(x, t.constant(constant_for({2}, s, "g")), t.constant(constant_for({2}, s, "b")), state, Mode::eval);
  });

  simple("avg_pool2d", {2, 2, 7, 6}, [](V x, std::uint64_t) { return avg_pool2d(x, 3, 2, 1); });
  simple("global_avg_pool", {2, 3, 4, 5}, [](V x, std::uint64_t) { return global_avg_pool(x); });
  simple("bilinear_resize up", {1, 2, 5, 5}, [](V x, std::uint64_t) { return bilinear_resize(x, 8, 7); });
  simple("bilinear_resize down", {1, 2, 8, 8}, [](V x, std::uint64_t) { return bilinear_resize(x, 3, 5); });
  simple("spatial_softmax", {2, 2, 4, 5}, [](V x, std::uint64_t) { return spatial_softmax(x); });
  simple("stacked_pool", {1, 2, 6, 5}, [](V x, std::uint64_t) { return stacked_pool(x, 2); });
  simple("downsample2x", {1, 2, 5, 7}, [](V x, std::uint64_t) { return downsample2x(x); });

  auto unit_case = [&](std::string name, DsfConfig cfg, Shape shape, std::string bound) {
    add_case(std::move(name), [cfg, shape, bound](std::uint64_t seed) {
      ParameterStore<double> base;
      dsf_init_params(base, "u", cfg, derive_seed(seed, "init"));
      Layer layer = [&](V v) {
        ParameterStore<double> store = base;
        ParamBinding<double> params(*v.tape, store, false);
        if (bound.empty()) return dsf_forward(params, "u", cfg, v, Mode::train);
        params.bind(bound, v);
        Tape<double>& t = *v.tape;
        return dsf_forward(params, "u", cfg, t.constant(constant_for(shape, seed, "x")), Mode::train);
      };
      const Shape in = bound.empty() ? shape : base.at(bound).shape();
      return layer_error(layer, in, seed);
    });
  };
  DsfConfig down;
  down.in_channels = 4, down.out_channels = 8, down.width_divider = 2, down.stride = 2;
  unit_case("dsf unit stride 2 input", down, {2, 4, 8, 8}, "");
  DsfConfig learn;
  learn.in_channels = 8, learn.out_channels = 8, learn.width_divider = 4, learn.residual = true;
  unit_case("dsf unit residual input", learn, {2, 8, 6, 6}, "");
  unit_case("dsf unit instant weight", learn, {2, 8, 6, 6}, "u.instant.weight");
  unit_case("dsf unit branch weight", learn, {2, 8, 6, 6}, "u.branch3.weight");
  DsfConfig plain = learn;
  plain.sff = false;
  unit_case("dsf unit without fusion", plain, {2, 8, 6, 6}, "");

  add_case("pyramid attention input", [](std::uint64_t seed) {
    const AttentionConfig cfg{4, 2, 2, 1};
    ParameterStore<double> base;
    attention_init_params(base, "a", cfg, derive_seed(seed, "init"));
    Layer layer = [&](V v) {
      ParameterStore<double> store = base;
      ParamBinding<double> params(*v.tape, store, false);
      return pyramid_attention(params, "a", cfg, v, Mode::train);
    };
    return layer_error(layer, {2, 4, 8, 8}, seed);
  });
  simple("attention fusion", {1, 3, 8, 8}, [](V x, std::uint64_t s) {
    auto& t = *x.tape;
    std::vector<V> maps{spatial_softmax(t.constant(constant_for({1, 1, 4, 4}, s, "m1"))),
                        spatial_softmax(t.constant(constant_for({1, 1, 2, 2}, s, "m2")))};
    return attention_fuse(x, maps);
  });
  simple("fused loss", {2, 1, 4, 4}, [](V s, std::uint64_t seed) {
    T target = uniform_tensor<double>({2, 1, 4, 4}, 0, 1, derive_seed(seed, "t"));
    for (Index i = 0; i < target.size(); ++i) target[i] = target[i] < 0.5 ? 0.0 : 1.0;
    return fused_loss(s.tape->constant(target), s).total;
  }, InputKind::probability);
  return cases;
}

std::vector<CheckResult> gradient_results(const std::string& group, const std::vector<GradCase>& cases, int seeds,
                                          double tolerance) {
  std::vector<CheckResult> out;
  for (const auto& c : cases) {
    double worst = 0, normwise = 0;
    std::string failure;
    for (int s = 0; s < seeds; ++s) {
      try {
        const auto r = c.error(derive_seed(0x6772616463686b, c.name, static_cast<std::uint64_t>(s)));
        worst = std::max(worst, r.max_relative);
        normwise = std::max(normwise, r.normwise);
      } catch (const std::exception& e) {
        failure = e.what();
        break;
      }
    }
    if (!failure.empty())
      out.push_back(result(group, c.name, false, "threw: " + failure));
    else
      out.push_back(result(group, c.name, worst < tolerance,
                           "max rel err " + fmt(worst) + " over " + std::to_string(seeds) + " seeds (tol " +
                               fmt(tolerance) + "), normwise " + fmt(normwise)));
  }
  return out;
}

NetConfig tiny_net() {
  NetConfig net;
  net.in_channels = 3;
  net.channels = {4, 8};
  net.alpha = 2;
  net.width_divider = 2;
  net.attention_levels = 2;
  net.attention_reduction = 2;
  return net;
}

LabelMap random_mask(std::mt19937_64& rng, Index rows, Index cols) {
  std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0.2, 0.8)(rng));
  LabelMap m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = coin(rng) ? 1 : 0;
  return m;
}

}  // namespace

std::vector<CheckResult> check_param_counts() {
  std::vector<CheckResult> out;
  int checked = 0, wrong = 0;
  std::string first_failure;
  for (Index m : {8, 16, 128})
    for (Index n_out : {8, 16, 128})
      for (Index k : {1, 2, 4, 8})
        for (Index n : {3, 5}) {
          if (n_out % k != 0) continue;
          DsfConfig cfg;
          cfg.in_channels = m, cfg.out_channels = n_out, cfg.width_divider = k, cfg.kernel = n;
          const Index enumerated = oracle::enumerate_dsf_weights(cfg);
          const Index formula = m * n_out / k + n * n * n_out * n_out / k;
          ++checked;
          if (enumerated != formula || dsf_param_count(cfg) != formula) {
            ++wrong;
            if (first_failure.empty())
              first_failure = "M=" + std::to_string(m) + " N=" + std::to_string(n_out) + " K=" + std::to_string(k) +
                              " n=" + std::to_string(n) + ": " + std::to_string(enumerated) + " vs " + std::to_string(formula);
          }
        }
  out.push_back(result("parameters", "grid M,N in {8,16,128}, K in {1,2,4,8}, n in {3,5}", wrong == 0,
                       std::to_string(checked - wrong) + "/" + std::to_string(checked) + " match" +
                           (first_failure.empty() ? "" : "; " + first_failure)));
  DsfConfig running;
  running.in_channels = 128, running.out_channels = 128, running.width_divider = 4, running.kernel = 3;
  const Index count = oracle::enumerate_dsf_weights(running);
  out.push_back(result("parameters", "M=N=128, K=4, n=3", count == 40960, std::to_string(count) + " (expected 40960)"));
  return out;
}

std::vector<CheckResult> check_receptive_fields(Index dilation_offset) {
  std::vector<CheckResult> out;
  for (Index n : {3, 5})
    for (Index k = 1; k <= 4; ++k) {
      DsfConfig cfg;
      cfg.in_channels = 4, cfg.out_channels = 2 * k, cfg.width_divider = k, cfg.kernel = n;
      cfg.dilation_offset = dilation_offset;
      const Index measured = oracle::impulse_response(cfg).side;
      const Index formula = dsf_receptive_field(n, k);
      const Index expected = (n - 1) * (Index{1} << (k - 1)) + 1;
      out.push_back(result("receptive field", "K=" + std::to_string(k) + " n=" + std::to_string(n),
                           measured == expected && formula == expected,
                           "measured " + std::to_string(measured) + ", formula " + std::to_string(expected)));
    }
  return out;
}

std::vector<CheckResult> check_gridding() {
  std::vector<CheckResult> out;
  auto row = [](const std::vector<bool>& r) {
    std::string s;
    for (bool b : r) s += b ? '1' : '0';
    return s;
  };
  for (Index k : {3, 4}) {
    DsfConfig cfg;
    cfg.in_channels = 4, cfg.out_channels = 2 * k, cfg.width_divider = k, cfg.kernel = 3;
    cfg.sff = false;
    const auto off = oracle::impulse_response(cfg);
    cfg.sff = true;
    const auto on = oracle::impulse_response(cfg);
    const std::string name = "K=" + std::to_string(k) + " n=3";
    out.push_back(result("gridding", name + " without fusion has interior zeros", off.interior_gap,
                         "centre row " + row(off.center_row)));
    out.push_back(result("gridding", name + " with fusion has no interior zeros", !on.interior_gap,
                         "centre row " + row(on.center_row)));
  }
  return out;
}

std::vector<CheckResult> check_layer_gradients(int seeds) {
  return gradient_results("gradients", gradient_cases(), seeds, kLayerGradTolerance);
}

std::vector<CheckResult> check_network_gradients(int seeds) {
  const NetConfig net = tiny_net();
  std::vector<GradCase> cases;
  auto network_case = [&](std::string name, std::string bound) {
    cases.push_back(GradCase{std::move(name), [net, bound](std::uint64_t seed) {
      const Model<double> model = build_network<double>(net, derive_seed(seed, "init"));
      const Shape image_shape{2, 3, 16, 16};
      const T image = uniform_tensor<double>(image_shape, 0, 1, derive_seed(seed, "image"));
      T target = uniform_tensor<double>({2, 1, 16, 16}, 0, 1, derive_seed(seed, "target"));
      for (Index i = 0; i < target.size(); ++i) target[i] = target[i] < 0.5 ? 0.0 : 1.0;
      ScalarFn<double> f = [&](V v) {
        ParameterStore<double> store = model.params;
        ParamBinding<double> params(*v.tape, store, false);
        V input = v;
        if (!bound.empty()) {
          params.bind(bound, v);
          input = v.tape->constant(image);
        }
        const auto out = forward(net, params, input, Mode::train);
        return fused_loss(v.tape->constant(target), out.map).total;
      };
      return finite_diff_report<double>(f, bound.empty() ? image : model.params.at(bound), kGradEpsilon);
    }});
  };
  network_case("tiny network, image", "");
  network_case("tiny network, instant weight", unit_prefix(1, 0) + ".instant.weight");
  network_case("tiny network, head weight", "head.weight");
  return gradient_results("gradients", cases, seeds, kNetworkGradTolerance);
}

std::vector<CheckResult> check_attention_normalization(int inputs) {
  double worst = 0;
  int maps = 0;
  for (int i = 0; i < inputs; ++i) {
    std::mt19937_64 rng(derive_seed(0x61747473756d, "attention", static_cast<std::uint64_t>(i)));
    const Index c = std::uniform_int_distribution<Index>(1, 8)(rng);
    const Index h = std::uniform_int_distribution<Index>(4, 20)(rng), w = std::uniform_int_distribution<Index>(4, 20)(rng);
    const AttentionConfig cfg{c, std::uniform_int_distribution<Index>(1, 2)(rng), 2, 1};
    ParameterStore<float> store;
    attention_init_params(store, "a", cfg, rng());
    Tape<float> tape;
    ParamBinding<float> params(tape, store, false);
    const auto x = tape.leaf(gaussian_tensor<float>({2, c, h, w}, 3.0, rng()));
    for (const auto& m : attention_pyramid(params, "a", cfg, x, Mode::train)) {
      const auto& v = m.value();
      const Index plane = v.dim(2) * v.dim(3);
      for (Index p = 0; p < v.dim(0) * v.dim(1); ++p) {
        double s = 0;
        for (Index j = 0; j < plane; ++j) s += v[p * plane + j];
        worst = std::max(worst, std::abs(s - 1.0));
        ++maps;
      }
    }
  }
  return {result("attention", "maps sum to 1", worst <= kAttentionSumTolerance,
                 std::to_string(maps) + " maps from " + std::to_string(inputs) + " inputs, max |sum-1| " + fmt(worst))};
}

std::vector<CheckResult> check_fusion_identity(int inputs) {
  double worst = 0;
  for (int i = 0; i < inputs; ++i) {
    const std::uint64_t seed = derive_seed(0x6675736531, "fusion", static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(seed);
    const Index c = std::uniform_int_distribution<Index>(1, 6)(rng);
    const Index h = 2 * std::uniform_int_distribution<Index>(2, 8)(rng), w = 2 * std::uniform_int_distribution<Index>(2, 8)(rng);
    Tape<double> tape;
    const auto x = tape.leaf(gaussian_tensor<double>({2, c, h, w}, 1.0, rng()));
    std::vector<V> maps;
    const auto levels = multiscale_downsample(x, 2);
    for (std::size_t n = 0; n < levels.size(); ++n) {
      const auto proj = tape.leaf(gaussian_tensor<double>({1, c, 1, 1}, 1.0, rng()));
      maps.push_back(attention_map(levels[n], proj));
    }
    const auto b = attention_fuse(x, maps).value();
    const auto a = attention_fuse_term_a(x, maps).value();
    worst = std::max(worst, ((b.data() - x.value().data()) - a.data()).abs().maxCoeff());
  }
  return {result("attention", "fusion (b) - input == (a)", worst <= kFusionTolerance,
                 std::to_string(inputs) + " inputs, max abs diff " + fmt(worst))};
}

std::vector<CheckResult> check_metric_oracles(int masks) {
  double pri_err = 0, voi_err = 0, gce_err = 0, bde_err = 0;
  int bde_pairs = 0;
  for (int i = 0; i < masks; ++i) {
    std::mt19937_64 rng(derive_seed(0x6d6574726963, "masks", static_cast<std::uint64_t>(i)));
    const Index rows = std::uniform_int_distribution<Index>(2, 8)(rng), cols = std::uniform_int_distribution<Index>(2, 8)(rng);
    const LabelMap a = random_mask(rng, rows, cols), b = random_mask(rng, rows, cols);
    pri_err = std::max(pri_err, std::abs(pri(a, b) - oracle::pri(a, b)));
    voi_err = std::max(voi_err, std::abs(voi(a, b) - oracle::voi(a, b)));
    gce_err = std::max(gce_err, std::abs(gce(a, b) - oracle::gce(a, b)));
    if (!oracle::boundary(a).empty() && !oracle::boundary(b).empty()) {
      bde_err = std::max(bde_err, std::abs(bde(a, b) - oracle::bde(a, b)));
      ++bde_pairs;
    }
  }
  std::vector<CheckResult> out;
  const std::string over = " over " + std::to_string(masks) + " mask pairs";
  out.push_back(result("metrics", "pri vs all pairs", pri_err <= kMetricTolerance, "max diff " + fmt(pri_err) + over));
  out.push_back(result("metrics", "voi vs explicit sets", voi_err <= kMetricTolerance, "max diff " + fmt(voi_err) + over));
  out.push_back(result("metrics", "gce vs explicit sets", gce_err <= kMetricTolerance, "max diff " + fmt(gce_err) + over));
  out.push_back(result("metrics", "bde vs all-pairs distances", bde_err <= kMetricTolerance && bde_pairs > masks / 2,
                       "max diff " + fmt(bde_err) + " over " + std::to_string(bde_pairs) + " pairs with boundaries"));

  bool fixed_point = true;
  for (int i = 0; i < 10; ++i) {
    std::mt19937_64 rng(derive_seed(0x706572666563, "perfect", static_cast<std::uint64_t>(i)));
    LabelMap g;
    do g = random_mask(rng, 8, 8);
    while (oracle::boundary(g).empty());
    const Map2d s = g.cast<double>();
    const auto m = evaluate_image("perfect", s, s);
    fixed_point = fixed_point && m.f_score == 1.0 && m.mae == 0.0 && m.pri == 1.0 && m.voi == 0.0 && m.gce == 0.0 &&
                  m.bde && *m.bde == 0.0;
  }
  out.push_back(result("metrics", "perfect prediction fixed point", fixed_point, "F=1 MAE=0 PRI=1 VOI=0 GCE=0 BDE=0"));
  return out;
}

std::vector<CheckResult> run_verify(const VerifyOptions& opts) {
  using Group = std::function<std::vector<CheckResult>()>;
  const std::vector<Group> groups{
      [] { return check_param_counts(); },
      [&] { return check_receptive_fields(opts.dilation_offset); },
      [&] { return check_layer_gradients(opts.gradient_seeds); },
      [&] { return check_network_gradients(opts.gradient_seeds); },
      [&] { return check_attention_normalization(opts.attention_inputs); },
      [&] { return check_fusion_identity(opts.fusion_inputs); },
      [&] { return check_metric_oracles(opts.metric_masks); },
  };
  std::vector<std::future<std::vector<CheckResult>>> running;
  for (const auto& g : groups)
    running.push_back(std::async(std::launch::async, [&g] {
      try {
        return g();
      } catch (const std::exception& e) {
        return std::vector<CheckResult>{result("verify", "group aborted", false, e.what())};
      }
    }));
  std::vector<CheckResult> all;
  for (auto& f : running) {
    auto part = f.get();
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

void print_results(std::ostream& os, const std::vector<CheckResult>& results) {
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.group.size() + 2 + r.name.size());
  for (const auto& r : results) {
    const std::string label = r.group + ": " + r.name;
    os << (r.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width)) << label << "  " << r.detail
       << '\n';
  }
  const auto passed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
  os << passed << "/" << results.size() << " checks passed\n";
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

}  // namespace dsf
