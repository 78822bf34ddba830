#include "dsfnet/metrics.hpp"
#include "dsfnet/model.hpp"
#include "dsfnet/oracles.hpp"
#include "dsfnet/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace dsf;

namespace {

LabelMap labels(int rows, int cols, std::initializer_list<int> v) {
  LabelMap m(rows, cols);
  auto it = v.begin();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = *it++;
  return m;
}

LabelMap random_mask(std::uint64_t seed, int max_side = 8) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> side(2, max_side), bit(0, 1);
  LabelMap m(side(gen), side(gen));
  for (Index i = 0; i < m.size(); ++i) m(i) = bit(gen);
  return m;
}

Map2d as_map(const LabelMap& m) { return m.cast<double>(); }

}  // namespace

TEST_CASE("region metric examples") {
  const auto a = labels(2, 2, {0, 0, 1, 1}), b = labels(2, 2, {0, 1, 0, 1});
  CHECK(pri(a, b) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(gce(a, b) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pri(a, a) == 1.0);
  CHECK(voi(a, a) == doctest::Approx(0.0));
  CHECK(gce(a, a) == 0.0);
  const LabelMap one = LabelMap::Zero(4, 4);
  LabelMap halves = LabelMap::Zero(4, 4);
  halves.rightCols(2) = 1;
  CHECK(voi(one, halves) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(voi(halves, one) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  LabelMap quarters = halves;
  quarters.bottomRows(2) += 2;
  CHECK(gce(halves, quarters) == 0.0);
  CHECK(gce(quarters, halves) == 0.0);
  CHECK_THROWS_AS(pri(a, LabelMap::Zero(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(voi(a, LabelMap::Zero(3, 2)), std::invalid_argument);
  CHECK_THROWS_AS(gce(a, LabelMap::Zero(1, 4)), std::invalid_argument);
}

TEST_CASE("f-measure and mae examples") {
  LabelMap g = LabelMap::Zero(4, 4);
  g.topRows(2) = 1;
  LabelMap half = LabelMap::Zero(4, 4);
  half.topRows(1) = 1;
  CHECK(f_measure(as_map(half), as_map(g), 0.5, 1.0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(f_measure(as_map(half), as_map(g), 0.5, 0.3) == doctest::Approx(1.3 * 0.5 / (0.3 + 0.5)).epsilon(1e-12));
  CHECK(f_measure(as_map(g), as_map(g)) == 1.0);
  CHECK(f_measure(Map2d::Zero(3, 3), Map2d::Zero(3, 3)) == 1.0);
  CHECK(f_measure(Map2d::Zero(3, 3), Map2d::Ones(3, 3)) == 0.0);
  CHECK(f_measure(Map2d::Ones(3, 3), Map2d::Zero(3, 3)) == 0.0);
  CHECK(mae(as_map(g), as_map(g)) == 0.0);
  CHECK(mae(Map2d::Constant(4, 4, 0.5), as_map(g)) == 0.5);
}

TEST_CASE("boundary displacement examples") {
  LabelMap a = LabelMap::Zero(5, 7), b = LabelMap::Zero(5, 7);
  a(2, 1) = 1;
  b(2, 4) = 1;
  CHECK(bde(a, b) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(bde(a, a) == 0.0);
  CHECK_THROWS_AS(bde(a, LabelMap::Zero(5, 7)), std::domain_error);
  CHECK_THROWS_AS(bde(LabelMap::Ones(5, 7), a), std::domain_error);
  LabelMap sq = LabelMap::Zero(8, 8);
  sq.block(2, 2, 3, 3) = 1;
  LabelMap shifted = LabelMap::Zero(8, 8);
  shifted.block(2, 3, 3, 3) = 1;
  CHECK(bde(sq, shifted) == doctest::Approx(oracle::bde(sq, shifted)).epsilon(1e-12));
  CHECK(boundary_pixels(sq).size() == 8);
}

TEST_CASE("fast metrics match brute force on random masks") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = random_mask(seed);
    LabelMap b = random_mask(seed + 1000);
    b.resize(a.rows(), a.cols());
    std::mt19937_64 gen(seed);
    for (Index i = 0; i < b.size(); ++i) b(i) = static_cast<int>(gen() & 1);
    CHECK(std::abs(pri(a, b) - oracle::pri(a, b)) < 1e-9);
    CHECK(std::abs(voi(a, b) - oracle::voi(a, b)) < 1e-9);
    CHECK(std::abs(gce(a, b) - oracle::gce(a, b)) < 1e-9);
    if (!boundary_pixels(a).empty() && !boundary_pixels(b).empty())
      CHECK(std::abs(bde(a, b) - oracle::bde(a, b)) < 1e-9);
    CHECK(boundary_pixels(a) == oracle::boundary(a));
  }
}

TEST_CASE("metric invariants") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = random_mask(seed);
    LabelMap other(a.rows(), a.cols());
    std::mt19937_64 gen(seed + 5);
    for (Index i = 0; i < other.size(); ++i) other(i) = static_cast<int>(gen() % 3);
    const LabelMap permuted = 7 - 3 * a;
    CHECK(pri(a, permuted) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(voi(a, permuted)) < 1e-12);
    CHECK(pri(other, a) == doctest::Approx(pri(other, permuted)).epsilon(1e-12));
    CHECK(voi(other, a) == doctest::Approx(voi(other, permuted)).epsilon(1e-12));
    CHECK(voi(other, a) == doctest::Approx(voi(a, other)).epsilon(1e-12));
    CHECK(voi(other, a) >= -1e-12);
    const double p = pri(other, a), g = gce(other, a);
    CHECK((p >= 0.0 && p <= 1.0));
    CHECK((g >= 0.0 && g <= 1.0));
  }
}

TEST_CASE("perfect prediction fixed point") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = random_mask(seed);
    g(0, 0) = 1;
    g(g.rows() - 1, g.cols() - 1) = 0;
    const auto m = evaluate_image("x", as_map(g), as_map(g));
    CHECK(m.f_score == 1.0);
    CHECK(m.mae == 0.0);
    CHECK(m.pri == 1.0);
    CHECK(std::abs(m.voi) < 1e-12);
    CHECK(m.gce == 0.0);
    REQUIRE(m.bde.has_value());
    CHECK(*m.bde == 0.0);
  }
}

TEST_CASE("precision-recall curve") {
  const auto thresholds = default_thresholds();
  REQUIRE(thresholds.size() == 255);
  CHECK(thresholds.front() == 1.0 / 256);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Map2d s(8, 8);
    std::mt19937_64 draw(seed + 300);
    for (Index i = 0; i < s.size(); ++i) s(i) = std::uniform_real_distribution<double>(0, 1)(draw);
    auto g = random_mask(seed);
    g.resize(8, 8);
    std::mt19937_64 gen(seed);
    for (Index i = 0; i < g.size(); ++i) g(i) = static_cast<int>(gen() & 1);
    g(0, 0) = 1;
    const auto pr = pr_curve(s, as_map(g), thresholds);
    REQUIRE(pr.size() == thresholds.size());
    for (std::size_t i = 1; i < pr.size(); ++i) CHECK(pr[i].recall <= pr[i - 1].recall);
    for (std::size_t i = 0; i < pr.size(); i += 37) {
      const LabelMap bin = (s >= thresholds[i]).cast<int>();
      const double tp = (bin * g).sum();
      CHECK(pr[i].recall == doctest::Approx(tp / g.sum()).epsilon(1e-12));
      if (bin.sum() > 0) CHECK(pr[i].precision == doctest::Approx(tp / bin.sum()).epsilon(1e-12));
    }
    CHECK(pr_curve(s, as_map(g), {1e-9})[0].recall == 1.0);
  }
  const Map2d g = as_map(labels(2, 2, {1, 0, 0, 1}));
  for (const auto& p : pr_curve(g, g, thresholds)) {
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
  }
  CHECK_THROWS_AS(pr_curve(g, g, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(pr_curve(g, g, {0.0, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(pr_curve(g, g, {0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("report formats") {
  std::vector<ImageMetrics> rows(2);
  rows[0] = ImageMetrics{"a", 1.0, 0.0, 1.0, 0.0, 0.0, 0.0};
  rows[1] = ImageMetrics{"b", 0.5, 0.25, 0.75, 0.5, 0.125, std::nullopt};
  std::ostringstream os;
  write_report(os, rows);
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("a ", 0) == 0);
  CHECK(lines[1].find("nan") != std::string::npos);
  std::istringstream agg(lines[2]);
  std::string tag;
  double f, m, p, v, g, b;
  agg >> tag >> f >> m >> p >> v >> g >> b;
  CHECK(tag == "AGGREGATE");
  CHECK(f == doctest::Approx(0.75));
  CHECK(m == doctest::Approx(0.125));
  CHECK(p == doctest::Approx(0.875));
  CHECK(v == doctest::Approx(0.25));
  CHECK(g == doctest::Approx(0.0625));
  CHECK(b == doctest::Approx(0.0));

  std::ostringstream csv;
  write_pr_csv(csv, {0.25, 0.75}, {{1.0, 0.5}, {0.5, 0.25}});
  const std::string text = csv.str();
  CHECK(text.rfind("threshold,precision,recall\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("mae equals the loss term") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = uniform_tensor<double>({1, 1, 6, 7}, 0, 1, seed);
    auto g = uniform_tensor<double>({1, 1, 6, 7}, 0, 1, seed + 9);
    for (Index i = 0; i < g.size(); ++i) g[i] = g[i] > 0.5;
    Tape<double> tape;
    const double term = fused_loss(tape.constant(g), tape.constant(s)).mae.value()[0];
    const auto to2d = [](const Tensor<double>& t) {
      return Map2d(Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.raw(), 6, 7));
    };
    CHECK(mae(to2d(s), to2d(g)) == doctest::Approx(term).epsilon(1e-14));
  }
}
