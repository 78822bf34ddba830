#include "dsfnet/oracles.hpp"

#include "dsfnet/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace dsf::oracle {
namespace {

void check_extent(const LabelMap& a, const LabelMap& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("oracle: extent mismatch");
}

using Segments = std::vector<std::set<Index>>;

Segments segments_of(const LabelMap& m) {
  std::set<int> labels(m.data(), m.data() + m.size());
  Segments out;
  for (int l : labels) {
    std::set<Index> s;
    for (Index i = 0; i < m.size(); ++i)
      if (m(i) == l) s.insert(i);
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t intersection_size(const std::set<Index>& x, const std::set<Index>& y) {
  std::size_t n = 0;
  for (Index i : x) n += y.count(i);
  return n;
}

const std::set<Index>& segment_containing(const Segments& segs, Index pixel) {
  for (const auto& s : segs)
    if (s.count(pixel)) return s;
  throw std::logic_error("oracle: pixel not covered");
}

}  // namespace

double pri(const LabelMap& a, const LabelMap& b) {
  check_extent(a, b);
  const Index n = a.size();
  double agree = 0, total = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      agree += (a(i) == a(j)) == (b(i) == b(j));
      total += 1;
    }
  return total == 0 ? 1.0 : agree / total;
}

double voi(const LabelMap& a, const LabelMap& b) {
  check_extent(a, b);
  const auto sa = segments_of(a), sb = segments_of(b);
  const double n = static_cast<double>(a.size());
  double ha = 0, hb = 0, mi = 0;
  for (const auto& x : sa) ha -= (x.size() / n) * std::log(x.size() / n);
  for (const auto& y : sb) hb -= (y.size() / n) * std::log(y.size() / n);
  for (const auto& x : sa)
    for (const auto& y : sb) {
      const double pxy = intersection_size(x, y) / n;
      if (pxy > 0) mi += pxy * std::log(pxy / ((x.size() / n) * (y.size() / n)));
    }
  return ha + hb - 2 * mi;
}

double gce(const LabelMap& a, const LabelMap& b) {
  check_extent(a, b);
  const auto sa = segments_of(a), sb = segments_of(b);
  double ab = 0, ba = 0;
  for (Index x = 0; x < a.size(); ++x) {
    const auto& ra = segment_containing(sa, x);
    const auto& rb = segment_containing(sb, x);
    const double common = static_cast<double>(intersection_size(ra, rb));
    ab += (static_cast<double>(ra.size()) - common) / static_cast<double>(ra.size());
    ba += (static_cast<double>(rb.size()) - common) / static_cast<double>(rb.size());
  }
  return std::min(ab, ba) / static_cast<double>(a.size());
}

std::vector<std::pair<int, int>> boundary(const LabelMap& mask) {
  std::vector<std::pair<int, int>> out;
  const int rows = static_cast<int>(mask.rows()), cols = static_cast<int>(mask.cols());
  const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (mask(r, c) != 1) continue;
      for (int k = 0; k < 4; ++k) {
        const int rr = r + dr[k], cc = c + dc[k];
        if (rr >= 0 && rr < rows && cc >= 0 && cc < cols && mask(rr, cc) == 0) {
          out.emplace_back(r, c);
          break;
        }
      }
    }
  return out;
}

double bde(const LabelMap& a, const LabelMap& b) {
  check_extent(a, b);
  const auto ba = boundary(a), bb = boundary(b);
  if (ba.empty() || bb.empty()) throw std::domain_error("oracle bde: empty boundary");
  auto mean_nearest = [](const auto& from, const auto& to) {
    double s = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to)
        best = std::min(best, std::hypot(double(p.first - q.first), double(p.second - q.second)));
      s += best;
    }
    return s / static_cast<double>(from.size());
  };
  return 0.5 * (mean_nearest(ba, bb) + mean_nearest(bb, ba));
}

Index enumerate_dsf_weights(const DsfConfig& cfg) {
  ParameterStore<double> store;
  dsf_init_params(store, "u", cfg, 1);
  Index total = 0;
  for (const auto& p : store.entries()) {
    const auto& n = p.name;
    if (n.size() >= 7 && n.compare(n.size() - 7, 7, ".weight") == 0) {
      Index count = 1;
      for (Index d : p.value.shape()) count *= d;
      total += count;
    }
  }
  return total;
}

ImpulseResponse impulse_response(const DsfConfig& unit) {
  DsfConfig cfg = unit;
  cfg.batch_norm = false;
  cfg.residual = false;
  cfg.stride = 1;

  ParameterStore<double> store;
  dsf_init_params(store, "u", cfg, 1);
  for (auto& p : store.entries())
    if (p.name.size() >= 7 && p.name.compare(p.name.size() - 7, 7, ".weight") == 0) p.value.data().setOnes();

  const Index widest = (cfg.kernel - 1) * (cfg.dilation(cfg.width_divider - 1)) + 1;
  const Index extent = 2 * widest + 1, mid = extent / 2;
  Tensor<double> input({1, cfg.in_channels, extent, extent});
  for (Index c = 0; c < cfg.in_channels; ++c) input[(c * extent + mid) * extent + mid] = 1.0;

  Tape<double> tape;
  ParamBinding<double> params(tape, store, false);
  const auto& out = dsf_pyramid(params, "u", cfg, tape.leaf(input)).value();

  const Index channels = out.dim(1);
  Eigen::ArrayXXd summed = Eigen::ArrayXXd::Zero(extent, extent);
  for (Index c = 0; c < channels; ++c)
    for (Index r = 0; r < extent; ++r)
      for (Index col = 0; col < extent; ++col) summed(r, col) += std::abs(out[(c * extent + r) * extent + col]);

  Index rmin = extent, rmax = -1, cmin = extent, cmax = -1;
  for (Index r = 0; r < extent; ++r)
    for (Index col = 0; col < extent; ++col)
      if (summed(r, col) != 0) {
        rmin = std::min(rmin, r), rmax = std::max(rmax, r);
        cmin = std::min(cmin, col), cmax = std::max(cmax, col);
      }
  ImpulseResponse res;
  if (rmax < 0) return res;
  res.side = std::max(rmax - rmin + 1, cmax - cmin + 1);
  for (Index col = cmin; col <= cmax; ++col) res.center_row.push_back(summed(mid, col) != 0);
  const auto first = std::find(res.center_row.begin(), res.center_row.end(), true);
  const auto last = std::find(res.center_row.rbegin(), res.center_row.rend(), true).base();
  res.interior_gap = first < last && std::find(first, last, false) != last;
  return res;
}

}  // namespace dsf::oracle
