#include "dsfnet/gradcheck.hpp"
#include "dsfnet/layers.hpp"
#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>

using namespace dsf;
using V = Var<double>;
using T = Tensor<double>;

namespace {

double dot(const T& a, const T& b) { return (a.data() * b.data()).sum(); }

T impulse(Index c, Index h, Index w) {
  T t({1, c, h, w});
  for (Index k = 0; k < c; ++k) t.at(0, k, h / 2, w / 2) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("conv geometry") {
  CHECK(effective_kernel_size(3, 1) == 3);
  CHECK(effective_kernel_size(3, 8) == 17);
  const Conv2dSpec s{1, 1, 3, 2, 2, 1, false};
  CHECK(s.output_extent(9) == (9 + 2 - 5) / 2 + 1);
  CHECK(s.weight_shape() == Shape{1, 1, 3, 3});
  CHECK(Conv2dSpec::same(4, 4, 3, 4).padding == 4);
}

TEST_CASE("1x1 conv with identity weight is the identity") {
  Tape<double> tape;
  const T x = gaussian_tensor<double>({2, 3, 5, 4}, 1.0, 1);
  T w({3, 3, 1, 1});
  for (Index i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const auto y = conv2d(tape.constant(x), tape.constant(w), Conv2dSpec{3, 3, 1, 1, 1, 0, false}).value();
  CHECK((y.data() == x.data()).all());
}

TEST_CASE("dilated all-ones kernel on an impulse hits exactly the taps") {
  for (Index r : {1, 2, 3}) {
    Tape<double> tape;
    const Index side = 4 * r + 5;
    const Conv2dSpec spec = Conv2dSpec::same(1, 1, 3, r);
    const auto y = conv2d(tape.constant(impulse(1, side, side)), tape.constant(T::constant({1, 1, 3, 3}, 1.0)), spec).value();
    int nonzero = 0;
    for (Index i = 0; i < side; ++i)
      for (Index j = 0; j < side; ++j) {
        const Index di = i - side / 2, dj = j - side / 2;
        const bool tap = di % r == 0 && dj % r == 0 && std::abs(di) <= r && std::abs(dj) <= r;
        CHECK(y.at(0, 0, i, j) == (tap ? 1.0 : 0.0));
        nonzero += y.at(0, 0, i, j) != 0.0;
      }
    CHECK(nonzero == 9);
  }
}

TEST_CASE("conv errors") {
  Tape<double> tape;
  auto x = tape.constant(T({1, 3, 4, 4}));
  CHECK_THROWS_AS(conv2d(x, tape.constant(T({2, 2, 3, 3})), Conv2dSpec{2, 2, 3, 1, 1, 1, false}), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, tape.constant(T({2, 3, 3, 3})), Conv2dSpec{3, 2, 3, 1, 4, 0, false}), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, tape.constant(T({2, 3, 3, 3})), Conv2dSpec{3, 2, 3, 1, 1, 1, true}), std::invalid_argument);
}

TEST_CASE("transposed conv examples") {
  Tape<double> tape;
  const Conv2dSpec up{1, 1, 2, 2, 1, 0, false};
  const auto y = transposed_conv2d(tape.constant(T::constant({1, 1, 1, 1}, 4.0)), tape.constant(T::constant({1, 1, 2, 2}, 0.25)), up).value();
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK((y.data() == 1.0).all());
  const auto z = transposed_conv2d(tape.constant(T({1, 1, 4, 4})), tape.constant(T({1, 1, 2, 2})), up).value();
  CHECK(z.shape() == Shape{1, 1, 8, 8});
}

TEST_CASE("transposed conv is the adjoint of conv") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Conv2dSpec fwd{3, 2, 3, 2, 1, 1, false};
    const Conv2dSpec back{2, 3, 3, 2, 1, 1, false};
    const T x = gaussian_tensor<double>({2, 3, 7, 7}, 1.0, derive_seed(seed, "x"));
    const T w = gaussian_tensor<double>(fwd.weight_shape(), 1.0, derive_seed(seed, "w"));
    Tape<double> tape;
    auto vx = tape.leaf(x, true);
    auto cx = conv2d(vx, tape.constant(w), fwd);
    const T y = gaussian_tensor<double>(cx.shape(), 1.0, derive_seed(seed, "y"));
    const auto ty = transposed_conv2d(tape.constant(y), tape.constant(w), back).value();
    REQUIRE(ty.shape() == x.shape());
    CHECK(std::abs(dot(cx.value(), y) - dot(x, ty)) < 1e-10);
    const auto g = tape.backward(sum(mul(cx, tape.constant(y))))[vx];
    CHECK((g.data() - ty.data()).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("batch norm examples") {
  Tape<double> tape;
  auto gamma = tape.constant(T::constant({2}, 1.5));
  auto beta = tape.constant(T({2}, {0.25, -0.75}));
  {
    auto state = BatchNormState<double>::make(2);
    const auto y = batch_norm(tape.constant(T::constant({3, 2, 2, 2}, 4.0)), gamma, beta, state, Mode::train).value();
    for (Index b = 0; b < 3; ++b)
      for (Index i = 0; i < 4; ++i) {
        CHECK(y[(b * 2 + 0) * 4 + i] == doctest::Approx(0.25));
        CHECK(y[(b * 2 + 1) * 4 + i] == doctest::Approx(-0.75));
      }
  }
  {
    auto state = BatchNormState<double>::make(2);
    const T x = gaussian_tensor<double>({2, 2, 3, 3}, 2.0, 4);
    const auto y = batch_norm(tape.constant(x), tape.constant(T::constant({2}, 1.0)), tape.constant(T({2})), state, Mode::eval).value();
    CHECK((y.data() - x.data()).abs().maxCoeff() < 1e-4);  // 1/sqrt(1 + eps)
  }
  auto state = BatchNormState<double>::make(2);
  CHECK_THROWS_AS(batch_norm(tape.constant(T({1, 2, 3, 3})), gamma, beta, state, Mode::train), std::invalid_argument);
  CHECK_NOTHROW(batch_norm(tape.constant(T({1, 2, 3, 3})), gamma, beta, state, Mode::eval));
}

TEST_CASE("batch norm train mode normalizes each channel") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape<double> tape;
    T x = gaussian_tensor<double>({4, 3, 5, 5}, 3.0, seed);
    x.data() += 2.0;
    auto state = BatchNormState<double>::make(3);
    const auto y = batch_norm(tape.constant(x), tape.constant(T::constant({3}, 1.0)), tape.constant(T({3})), state, Mode::train).value();
    for (Index c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (Index b = 0; b < 4; ++b)
        for (Index i = 0; i < 25; ++i) m += y[(b * 3 + c) * 25 + i];
      m /= 100;
      for (Index b = 0; b < 4; ++b)
        for (Index i = 0; i < 25; ++i) v += std::pow(y[(b * 3 + c) * 25 + i] - m, 2);
      v /= 100;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-5);
    }
    CHECK((state.running_mean.data() != 0.0).all());
  }
}

TEST_CASE("batch norm eval mode is a per-channel affine map") {
  Tape<double> tape;
  auto state = BatchNormState<double>::make(2);
  state.running_mean = T({2}, {0.5, -1.0});
  state.running_var = T({2}, {4.0, 0.25});
  auto gamma = tape.constant(T({2}, {2.0, -1.0}));
  auto beta = tape.constant(T({2}, {0.1, 0.2}));
  const T a = gaussian_tensor<double>({2, 2, 3, 3}, 1.0, 1), b = gaussian_tensor<double>({2, 2, 3, 3}, 1.0, 2);
  auto bn = [&](const T& x) { return batch_norm(tape.constant(x), gamma, beta, state, Mode::eval).value(); };
  const T zero({2, 2, 3, 3});
  T mix = a;
  mix.data() = 0.3 * a.data() + 0.7 * b.data();
  const T lhs = bn(mix);
  const T fa = bn(a), fb = bn(b);
  CHECK((lhs.data() - (0.3 * fa.data() + 0.7 * fb.data())).abs().maxCoeff() < 1e-12);
  const T before_mean = state.running_mean;
  (void)bn(a);
  CHECK((state.running_mean.data() == before_mean.data()).all());
}

TEST_CASE("global average pool") {
  Tape<double> tape;
  CHECK(global_avg_pool(tape.constant(T::constant({1, 1, 3, 4}, 2.5))).value().item() == 2.5);
  const auto y = global_avg_pool(tape.constant(T({1, 1, 2, 2}, {1, 2, 3, 4}))).value();
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 2.5);
  const T x = gaussian_tensor<double>({2, 3, 4, 5}, 1.0, 9);
  T x3 = x;
  x3.data() *= 3.0;
  const auto g1 = global_avg_pool(tape.constant(x)).value(), g3 = global_avg_pool(tape.constant(x3)).value();
  CHECK((g3.data() - 3.0 * g1.data()).abs().maxCoeff() < 1e-14);
}

TEST_CASE("bilinear resize") {
  Tape<double> tape;
  const auto row = bilinear_resize(tape.constant(T({1, 1, 1, 2}, {0, 1})), 1, 4).value();
  CHECK(row[0] == doctest::Approx(0.0));
  CHECK(row[1] == doctest::Approx(0.25));
  CHECK(row[2] == doctest::Approx(0.75));
  CHECK(row[3] == doctest::Approx(1.0));
  for (auto [h, w] : {std::pair<Index, Index>{7, 3}, {1, 1}, {16, 16}}) {
    const auto y = bilinear_resize(tape.constant(T::constant({1, 2, 4, 4}, 0.3)), h, w).value();
    CHECK((y.data() - 0.3).abs().maxCoeff() < 1e-15);
  }
  T x = T::constant({1, 1, 16, 16}, 1.0);
  x.at(0, 0, 7, 9) += 10.0;
  const auto down = bilinear_resize(tape.constant(x), 8, 8);
  const auto back = bilinear_resize(down, 16, 16).value();
  CHECK(std::abs(back.data().sum() - x.data().sum()) / x.data().sum() < 0.05);
  CHECK_THROWS_AS(bilinear_resize(tape.constant(x), 0, 3), std::invalid_argument);
}

TEST_CASE("spatial softmax") {
  Tape<double> tape;
  const auto u = spatial_softmax(tape.constant(T::constant({1, 1, 3, 5}, 0.7))).value();
  CHECK((u.data() - 1.0 / 15).abs().maxCoeff() < 1e-15);
  const auto p = spatial_softmax(tape.constant(T({1, 1, 1, 2}, {0, std::log(3.0)}))).value();
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const T x = gaussian_tensor<double>({2, 1, 4, 6}, 5.0, seed);
    T shifted = x;
    shifted.data() += 123.0;
    const auto a = spatial_softmax(tape.constant(x)).value(), b = spatial_softmax(tape.constant(shifted)).value();
    CHECK((a.data() - b.data()).abs().maxCoeff() < 1e-12);
    CHECK((a.data() >= 0.0).all());
    for (Index img = 0; img < 2; ++img) CHECK(std::abs(a.data().segment(img * 24, 24).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("orthogonal init") {
  const auto one = orthogonal_init<double>(1, 1, 3);
  CHECK(std::abs(std::abs(one(0, 0)) - 1.0) < 1e-15);
  const auto w = orthogonal_init<double>(4, 8, 7);
  CHECK((w * w.transpose() - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  const auto tall = orthogonal_init<double>(9, 3, 7);
  CHECK((tall.transpose() * tall - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  const auto sq = orthogonal_init<double>(5, 5, 11);
  CHECK(sq.determinant() == doctest::Approx(1.0));
  for (auto [r, c] : {std::pair<Index, Index>{4, 8}, {8, 4}, {6, 6}, {2, 16}}) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(orthogonal_init<double>(r, c, 5));
    CHECK((svd.singularValues().array() - 1.0).abs().maxCoeff() < 1e-8);
  }
  CHECK(orthogonal_init<double>(4, 8, 7) == orthogonal_init<double>(4, 8, 7));
  CHECK(orthogonal_init<double>(4, 8, 7) != orthogonal_init<double>(4, 8, 8));
  CHECK_THROWS_AS(orthogonal_init<double>(0, 3, 1), std::invalid_argument);
}

TEST_CASE("stacked pool") {
  Tape<double> tape;
  const auto c = stacked_pool(tape.constant(T::constant({1, 1, 5, 5}, 2.0)), 1).value();
  CHECK((c.data() - 4.0).abs().maxCoeff() < 1e-15);
  const auto y = stacked_pool(tape.constant(impulse(1, 7, 7)), 1).value();
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 7; ++j) {
      const bool centre = i == 3 && j == 3, plateau = std::abs(i - 3) <= 1 && std::abs(j - 3) <= 1;
      CHECK(y.at(0, 0, i, j) == doctest::Approx(centre ? 1.0 + 1.0 / 9 : plateau ? 1.0 / 9 : 0.0));
    }
  for (Index stages = 1; stages <= 4; ++stages)
    CHECK(stacked_pool(tape.constant(T({2, 3, 6, 5})), stages).shape() == Shape{2, 3, 6, 5});
  CHECK_THROWS_AS(stacked_pool(tape.constant(T({1, 1, 3, 3})), 0), std::invalid_argument);
}

TEST_CASE("layer gradients on random small inputs") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const T w = gaussian_tensor<double>({3, 2, 3, 3}, 1.0, seed);
    ScalarFn<double> conv = [&](V x) {
      return sum(mul(conv2d(x, x.tape->constant(w), Conv2dSpec::same(2, 3, 3, 2)), x.tape->constant(gaussian_tensor<double>({1, 3, 6, 6}, 1.0, seed + 9))));
    };
    CHECK(finite_diff_check<double>(conv, gaussian_tensor<double>({1, 2, 6, 6}, 1.0, seed + 1), 1e-5) < 1e-4);
    ScalarFn<double> pool = [&](V x) { return sum(mul(stacked_pool(x, 2), stacked_pool(x, 1))); };
    CHECK(finite_diff_check<double>(pool, gaussian_tensor<double>({1, 2, 5, 5}, 1.0, seed + 2), 1e-5) < 1e-4);
  }
}
