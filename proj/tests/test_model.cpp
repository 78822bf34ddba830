#include "dsfnet/dsf_unit.hpp"
#include "dsfnet/gradcheck.hpp"
#include "dsfnet/model.hpp"
#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace dsf;
using V = Var<double>;
using T = Tensor<double>;

namespace {

NetConfig small_net() {
  NetConfig cfg;
  cfg.channels = {4, 8, 16};
  cfg.width_divider = 2;
  cfg.attention_levels = 2;
  cfg.attention_reduction = 2;
  return cfg;
}

T run(const Model<double>& model, const T& image, Mode mode = Mode::eval) {
  ParameterStore<double> store = model.params;
  Tape<double> tape;
  ParamBinding<double> params(tape, store, false);
  return forward(model.config, params, tape.constant(image), mode).map.value();
}

Index count_units(const ParameterStore<double>& store) {
  Index units = 0;
  for (const auto& p : store.entries())
    if (p.name.starts_with("encoder.stage") && p.name.ends_with(".instant.weight")) ++units;
  return units;
}

}  // namespace

TEST_CASE("network construction") {
  NetConfig cfg;
  cfg.channels = {16, 64, 128};
  cfg.alpha = 2;
  const auto model = build_network<double>(cfg, 1);
  CHECK(model.params.contains("encoder.stem.weight"));
  CHECK(model.params.at("encoder.stem.weight").shape() == Shape{16, 3, 3, 3});
  CHECK(count_units(model.params) == 4);
  for (Index stage = 1; stage <= 2; ++stage) {
    const auto units = cfg.stage_units(stage);
    REQUIRE(units.size() == 2);
    CHECK(units[0].stride == 2);
    CHECK_FALSE(units[0].residual);
    CHECK(units[1].stride == 1);
    CHECK(units[1].residual);
  }
  cfg.alpha = 3;
  CHECK(count_units(build_network<double>(cfg, 1).params) == 6);
  cfg.alpha = 1;
  CHECK(count_units(build_network<double>(cfg, 1).params) == 2);
}

TEST_CASE("network config errors") {
  NetConfig cfg = small_net();
  cfg.channels = {4, 6, 16};
  cfg.width_divider = 4;
  CHECK_THROWS_AS(build_network<double>(cfg, 0), std::invalid_argument);
  cfg = small_net();
  cfg.alpha = 0;
  CHECK_THROWS_AS(build_network<double>(cfg, 0), std::invalid_argument);
  cfg = small_net();
  cfg.channels = {4};
  CHECK_THROWS_AS(build_network<double>(cfg, 0), std::invalid_argument);
}

TEST_CASE("same seed gives identical parameters") {
  const auto a = build_network<double>(small_net(), 9), b = build_network<double>(small_net(), 9);
  const auto c = build_network<double>(small_net(), 10);
  REQUIRE(a.params.size() == b.params.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params.entries()[i].name == b.params.entries()[i].name);
    CHECK((a.params.entries()[i].value.data() == b.params.entries()[i].value.data()).all());
    if (a.params.entries()[i].trainable && (a.params.entries()[i].value.data() != c.params.entries()[i].value.data()).any())
      differs = true;
  }
  CHECK(differs);
}

TEST_CASE("saliency map matches input extent and lies in (0,1)") {
  NetConfig def;
  const auto big = build_network<double>(def, 3);
  const auto m64 = run(big, uniform_tensor<double>({1, 3, 64, 64}, 0, 1, 4));
  CHECK(m64.shape() == Shape{1, 1, 64, 64});
  CHECK((m64.data() > 0.0).all());
  CHECK((m64.data() < 1.0).all());
  const auto model = build_network<double>(small_net(), 3);
  for (auto [h, w] : {std::pair<Index, Index>{32, 32}, {32, 48}, {64, 32}}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto m = run(model, gaussian_tensor<double>({2, 3, h, w}, 3.0, seed), Mode::train);
      CHECK(m.shape() == Shape{2, 1, h, w});
      CHECK((m.data() > 0.0).all());
      CHECK((m.data() < 1.0).all());
    }
  }
}

TEST_CASE("forward examples") {
  const auto model = build_network<double>(small_net(), 5);
  const T image = uniform_tensor<double>({1, 3, 32, 32}, 0.1, 0.5, 6);
  T bright = image;
  bright.data() *= 2.0;
  CHECK((run(model, image).data() - run(model, bright).data()).abs().maxCoeff() > 0.0);

  T pair({2, 3, 32, 32});
  pair.data().head(image.size()) = image.data();
  pair.data().tail(image.size()) = image.data();
  const auto m = run(model, pair);
  const Index plane = 32 * 32;
  CHECK((m.data().head(plane) == m.data().tail(plane)).all());
  CHECK((m.data().head(plane) == run(model, image).data()).all());
  CHECK((run(model, image).data() == run(model, image).data()).all());

  CHECK_THROWS_AS(run(model, T({1, 3, 36, 32})), std::invalid_argument);
  CHECK_THROWS_AS(run(model, T({1, 2, 32, 32})), std::invalid_argument);
}

TEST_CASE("fused loss examples") {
  Tape<double> tape;
  T g({1, 1, 4, 4});
  for (Index i = 0; i < g.size(); ++i) g[i] = i % 3 == 0;
  const auto perfect = fused_loss(tape.constant(g), tape.constant(g));
  CHECK(perfect.mae.value()[0] == 0.0);
  CHECK(perfect.cross_entropy.value()[0] == doctest::Approx(-std::log(1 - kProbabilityClamp)).epsilon(1e-6));
  CHECK(perfect.total.value()[0] < 2e-7);

  const auto half = fused_loss(tape.constant(g), tape.constant(T::constant(g.shape(), 0.5)));
  CHECK(half.cross_entropy.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(half.mae.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(half.total.value()[0] == doctest::Approx(std::log(2.0) + 0.5).epsilon(1e-12));
  CHECK(half.total.value()[0] == doctest::Approx(1.1931).epsilon(1e-4));

  CHECK_THROWS_AS(fused_loss(tape.constant(g), tape.constant(T({1, 1, 4, 5}))), std::invalid_argument);
}

TEST_CASE("fused loss is non-negative and decreases toward the target") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tape<double> tape;
    T g = uniform_tensor<double>({2, 1, 5, 5}, 0, 1, seed);
    for (Index i = 0; i < g.size(); ++i) g[i] = g[i] > 0.5;
    const T s = uniform_tensor<double>({2, 1, 5, 5}, 0, 1, seed + 50);
    CHECK(fused_loss(tape.constant(g), tape.constant(s)).total.value()[0] >= 0.0);
    CHECK(fused_loss(tape.constant(s), tape.constant(s)).total.value()[0] >= 0.0);
    double previous = INFINITY;
    for (double t = 0.0; t <= 0.95; t += 0.05) {
      T moved = T::constant(g.shape(), 0.5);
      moved.data() += t * (g.data() - 0.5);
      const double loss = fused_loss(tape.constant(g), tape.constant(moved)).total.value()[0];
      CHECK(loss < previous);
      previous = loss;
    }
  }
}

TEST_CASE("encoder parameter budget") {
  for (Index alpha : {1, 2, 3}) {
    NetConfig cfg;
    cfg.alpha = alpha;
    const auto model = build_network<double>(cfg, 0);
    Index formula = standard_conv_param_count(cfg.in_channels, cfg.channels.front(), 3);
    for (Index s = 1; s < cfg.stage_count(); ++s)
      for (const auto& u : cfg.stage_units(s)) formula += dsf_param_count(u);
    Index enumerated = 0;
    for (const auto& p : model.params.entries())
      if (p.name.starts_with("encoder.") && p.name.ends_with("weight") && p.value.rank() == 4) enumerated += p.value.size();
    CHECK(enumerated == formula);
    CHECK(encoder_conv_weight_count(model) == formula);
  }
}

TEST_CASE("tiny network gradient") {
  NetConfig cfg;
  cfg.channels = {4, 8};
  cfg.width_divider = 2;
  cfg.attention_levels = 2;
  cfg.attention_reduction = 2;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    auto model = build_network<double>(cfg, seed);
    const T image = gaussian_tensor<double>({2, 3, 16, 16}, 1.0, seed + 1);
    T mask = uniform_tensor<double>({2, 1, 16, 16}, 0, 1, seed + 2);
    for (Index i = 0; i < mask.size(); ++i) mask[i] = mask[i] > 0.5;
    ScalarFn<double> f = [&](V w) {
      ParameterStore<double> store = model.params;
      ParamBinding<double> params(*w.tape, store);
      params.bind("encoder.stem.weight", w);
      return fused_loss(w.tape->constant(mask), forward(cfg, params, w.tape->constant(image), Mode::train).map).total;
    };
    CHECK(finite_diff_check<double>(f, model.params.at("encoder.stem.weight"), 1e-5) < 1e-3);
  }
}
