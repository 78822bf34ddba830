#include "dsfnet/autograd.hpp"
#include "dsfnet/gradcheck.hpp"
#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace dsf;
using V = Var<double>;
using T = Tensor<double>;

namespace {

T vec(std::initializer_list<double> v) { return T({static_cast<Index>(v.size())}, v); }

void check_values(const T& t, std::initializer_list<double> expected, double tol = 0.0) {
  REQUIRE(t.size() == static_cast<Index>(expected.size()));
  Index i = 0;
  for (double e : expected) {
    if (tol == 0.0)
      CHECK(t[i++] == e);
    else
      CHECK(t[i++] == doctest::Approx(e).epsilon(tol));
  }
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  T t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(T({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(T({1, 1, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(T({2, 2}, T::Array::Zero(3)), std::invalid_argument);
  CHECK(T::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(t.item(), std::invalid_argument);
}

TEST_CASE("elementwise examples") {
  Tape<double> tape;
  check_values(relu(tape.constant(vec({-1, 0, 2}))).value(), {0, 0, 2});
  check_values(sigmoid(tape.constant(vec({0}))).value(), {0.5});
  check_values(add(tape.constant(vec({1, 2})), tape.constant(vec({10}))).value(), {11, 12});
  check_values(maximum(tape.constant(vec({1, 5})), tape.constant(vec({3, 2}))).value(), {3, 5});
  check_values(exp(tape.constant(vec({0, 1}))).value(), {1, std::exp(1.0)}, 1e-15);
  check_values(log(tape.constant(vec({1, std::exp(2.0)}))).value(), {0, 2}, 1e-15);
}

TEST_CASE("sigmoid is stable for large arguments") {
  Tape<double> tape;
  const auto s = sigmoid(tape.constant(vec({-800, 800}))).value();
  CHECK(s[0] >= 0.0);
  CHECK(s[0] < 1e-300);
  CHECK(s[1] == 1.0);
}

TEST_CASE("elementwise errors") {
  Tape<double> tape;
  CHECK_THROWS_AS(add(tape.constant(T({2, 3})), tape.constant(T({4}))), std::invalid_argument);
  CHECK_THROWS_AS(log(tape.constant(vec({1, 0}))), std::domain_error);
  CHECK_THROWS_AS(log(tape.constant(vec({-1}))), std::domain_error);
  CHECK_THROWS_AS(exp(tape.constant(vec({1000}))), std::domain_error);
  CHECK_THROWS_AS(tape.leaf(vec({std::numeric_limits<double>::quiet_NaN()})), std::domain_error);
}

TEST_CASE("broadcast shapes") {
  CHECK(broadcast_shape({2, 3, 4}, {3, 1}) == Shape{2, 3, 4});
  CHECK(broadcast_shape({1}, {5}) == Shape{5});
  CHECK_THROWS_AS(broadcast_shape({2, 3}, {4, 3}), std::invalid_argument);
}

TEST_CASE("broadcast add and mul commute bit for bit") {
  Tape<double> tape;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = tape.constant(gaussian_tensor<double>({2, 3, 4}, 1.0, seed));
    auto b = tape.constant(gaussian_tensor<double>({3, 1}, 1.0, seed + 100));
    CHECK((add(a, b).value().data() == add(b, a).value().data()).all());
    CHECK((mul(a, b).value().data() == mul(b, a).value().data()).all());
  }
}

TEST_CASE("matmul examples") {
  Tape<double> tape;
  auto id = tape.constant(T({2, 2}, {1, 0, 0, 1}));
  check_values(matmul(id, tape.constant(T({2, 1}, {3, 4}))).value(), {3, 4});
  check_values(matmul(tape.constant(T({1, 2}, {1, 2})), tape.constant(T({2, 1}, {3, 4}))).value(), {11});
  CHECK_THROWS_AS(matmul(tape.constant(T({2, 3})), tape.constant(T({2, 3}))), std::invalid_argument);
  CHECK_THROWS_AS(matmul(tape.constant(T({2})), tape.constant(T({2, 3}))), std::invalid_argument);
}

TEST_CASE("gradient of sum(A B) with respect to A is ones B^T") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const T a = gaussian_tensor<double>({3, 3}, 1.0, seed);
    const T b = gaussian_tensor<double>({3, 3}, 1.0, seed + 50);
    Tape<double> tape;
    auto va = tape.leaf(a, true);
    const auto g = tape.backward(sum(matmul(va, tape.constant(b))))[va];
    for (Index i = 0; i < 3; ++i)
      for (Index k = 0; k < 3; ++k) CHECK(g[i * 3 + k] == doctest::Approx(b[k * 3 + 0] + b[k * 3 + 1] + b[k * 3 + 2]));
    ScalarFn<double> f = [&](V x) { return sum(matmul(x, x.tape->constant(b))); };
    CHECK(finite_diff_check<double>(f, a, 1e-5) < 1e-6);
  }
}

TEST_CASE("reduce examples") {
  Tape<double> tape;
  check_values(sum(tape.constant(vec({1, 2, 3}))).value(), {6});
  check_values(reduce(ReduceKind::max, tape.constant(vec({3, -1, 7})), {}).value(), {7});
  auto c = tape.constant(T::constant({2, 3, 4, 5}, 1.75));
  const auto m = reduce(ReduceKind::mean, c, {2, 3}).value();
  CHECK(m.shape() == Shape{2, 3});
  for (Index i = 0; i < m.size(); ++i) CHECK(m[i] == 1.75);
  CHECK(reduce(ReduceKind::sum, c, {1}, true).value().shape() == Shape{2, 1, 4, 5});
  CHECK_THROWS_AS(reduce(ReduceKind::sum, c, {4}), std::invalid_argument);
  CHECK_THROWS_AS(reduce(ReduceKind::sum, c, {-1}), std::invalid_argument);
}

TEST_CASE("backward examples") {
  {
    Tape<double> tape;
    auto x = tape.leaf(vec({1, 2}), true);
    check_values(tape.backward(sum(mul(x, x)))[x], {2, 4});
  }
  {
    Tape<double> tape;
    auto w = tape.leaf(vec({0}), true);
    check_values(tape.backward(sum(sigmoid(w)))[w], {0.25});
  }
  {
    Tape<double> tape;
    auto x = tape.leaf(vec({1, 2}), true);
    auto unused = tape.leaf(vec({5, 6, 7}), true);
    const auto g = tape.backward(sum(x));
    REQUIRE(g.has(unused));
    check_values(g[unused], {0, 0, 0});
  }
}

TEST_CASE("backward errors") {
  Tape<double> tape, other;
  auto x = tape.leaf(vec({1, 2}), true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
  auto y = other.leaf(T::scalar(1), true);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("backward of sum is all ones for any shape") {
  for (const Shape& s : {Shape{1}, Shape{7}, Shape{2, 3}, Shape{2, 1, 4}, Shape{2, 3, 2, 5}}) {
    Tape<double> tape;
    auto x = tape.leaf(gaussian_tensor<double>(s, 1.0, 3), true);
    const auto g = tape.backward(sum(x))[x];
    CHECK(g.shape() == s);
    CHECK((g.data() == 1.0).all());
  }
}

TEST_CASE("tape records inputs before outputs and replays deterministically") {
  auto run = [](Tape<double>& tape) {
    auto x = tape.leaf(gaussian_tensor<double>({3, 4}, 1.0, 11), true);
    auto y = sigmoid(add(matmul(x, tape.constant(gaussian_tensor<double>({4, 2}, 1.0, 12))), tape.constant(vec({0.5, -0.5}))));
    return sum(mul(y, y));
  };
  Tape<double> a, b;
  const double va = run(a).value().item(), vb = run(b).value().item();
  CHECK(va == vb);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t in : a.node(i).inputs) CHECK(in < i);
}

TEST_CASE("random five-op composite matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const T w = gaussian_tensor<double>({4, 3}, 1.0, derive_seed(seed, "w"));
    const T b = gaussian_tensor<double>({3}, 1.0, derive_seed(seed, "b"));
    ScalarFn<double> f = [&](V x) {
      auto& t = *x.tape;
      auto h = add(matmul(x, t.constant(w)), t.constant(b));
      return mean(mul(sigmoid(h), exp(scale(h, 0.3))));
    };
    CHECK(finite_diff_check<double>(f, gaussian_tensor<double>({2, 4}, 1.0, seed), 1e-5) < 1e-6);
  }
}

TEST_CASE("finite_diff_check examples") {
  const T x = gaussian_tensor<double>({3, 4}, 1.0, 5);
  CHECK(finite_diff_check<double>([](V v) { return sum(v); }, x, 1e-5) < 1e-12);
  T away = x;
  for (Index i = 0; i < away.size(); ++i)
    if (std::abs(away[i]) < 0.01) away[i] = 0.5;
  CHECK(finite_diff_check<double>([](V v) { return sum(relu(v)); }, away, 1e-5) < 1e-8);
  CHECK_THROWS_AS(finite_diff_check<double>([](V v) { return v; }, x, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff_check<double>([](V v) { return sum(v); }, x, 0.0), std::invalid_argument);
}

TEST_CASE("finite_diff_check flags a wrong gradient") {
  // square with a backward that is off by 1%
  ScalarFn<double> f = [](V v) {
    auto& t = *v.tape;
    T out = v.value();
    out.data() = out.data().square();
    const T saved = v.value();
    auto y = t.record("bad_square", {v}, out, [saved](const T& g, std::vector<T*>& in) {
      if (in[0]) in[0]->data() += 2.02 * saved.data() * g.data();
    });
    return sum(y);
  };
  CHECK(finite_diff_check<double>(f, vec({-1.0, 0.5, 2.0}), 1e-5) == doctest::Approx(0.02 / 2.02).epsilon(1e-6));
}

TEST_CASE("clamp reshape concat") {
  Tape<double> tape;
  auto x = tape.leaf(vec({-2, 0.25, 3}), true);
  auto c = clamp(x, -1.0, 1.0);
  check_values(c.value(), {-1, 0.25, 1});
  check_values(tape.backward(sum(c))[x], {0, 1, 0});
  CHECK_THROWS_AS(clamp(x, 1.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(reshape(x, {2, 2}), std::invalid_argument);
  auto a = tape.constant(T({1, 2}, {1, 2}));
  auto b = tape.constant(T({2, 2}, {3, 4, 5, 6}));
  check_values(concat(std::vector<V>{a, b}, 0).value(), {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(concat(std::vector<V>{a, b}, 1), std::invalid_argument);
  CHECK_THROWS_AS(concat(std::vector<V>{}, 0), std::invalid_argument);
}
