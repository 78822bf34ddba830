#include "dsfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

namespace dsf {
namespace {

using Eigen::Index;

void require_same_extent(Index rows_a, Index cols_a, Index rows_b, Index cols_b, const char* what) {
  if (rows_a != rows_b || cols_a != cols_b)
    throw std::invalid_argument(std::string(what) + ": extent mismatch");
}

struct Contingency {
  std::map<int, double> a, b;
  std::map<std::pair<int, int>, double> joint;
  double n = 0;
};

Contingency contingency(const LabelMap& a, const LabelMap& b, const char* what) {
  require_same_extent(a.rows(), a.cols(), b.rows(), b.cols(), what);
  Contingency t;
  for (Index i = 0; i < a.size(); ++i) {
    const int la = a(i), lb = b(i);
    t.a[la] += 1;
    t.b[lb] += 1;
    t.joint[{la, lb}] += 1;
  }
  t.n = static_cast<double>(a.size());
  return t;
}

double pairs(double k) { return k * (k - 1) / 2; }

// 1D squared distance transform (lower envelope of parabolas).
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d) {
  const std::size_t n = f.size();
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  auto intersect = [&](std::size_t q, std::size_t p) {
    const double dq = static_cast<double>(q), dp = static_cast<double>(p);
    return ((f[q] + dq * dq) - (f[p] + dp * dp)) / (2.0 * (dq - dp));
  };
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::size_t q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dist = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = dist * dist + f[v[k]];
  }
}

// Exact squared Euclidean distance to the nearest seed pixel.
Map2d squared_distance_to(const std::vector<std::pair<int, int>>& seeds, Index rows, Index cols) {
  constexpr double far = 1e20;
  Map2d g = Map2d::Constant(rows, cols, far);
  for (const auto& [r, c] : seeds) g(r, c) = 0.0;

  std::vector<double> f, d;
  f.resize(static_cast<std::size_t>(rows));
  d.resize(static_cast<std::size_t>(rows));
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) f[static_cast<std::size_t>(r)] = g(r, c);
    distance_transform_1d(f, d);
    for (Index r = 0; r < rows; ++r) g(r, c) = d[static_cast<std::size_t>(r)];
  }
  f.resize(static_cast<std::size_t>(cols));
  d.resize(static_cast<std::size_t>(cols));
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) f[static_cast<std::size_t>(c)] = g(r, c);
    distance_transform_1d(f, d);
    for (Index c = 0; c < cols; ++c) g(r, c) = d[static_cast<std::size_t>(c)];
  }
  return g;
}

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

Counts confusion(const Map2d& saliency, const Map2d& truth, double threshold) {
  require_same_extent(saliency.rows(), saliency.cols(), truth.rows(), truth.cols(), "confusion");
  Counts c;
  for (Index i = 0; i < saliency.size(); ++i) {
    const bool p = saliency(i) >= threshold;
    const bool g = truth(i) >= 0.5;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  return c;
}

}  // namespace

LabelMap binarize(const Map2d& map, double threshold) { return (map >= threshold).cast<int>(); }

double f_measure(const Map2d& saliency, const Map2d& truth, double threshold, double beta_sq) {
  if (!(threshold > 0 && threshold < 1)) throw std::invalid_argument("f_measure: threshold outside (0,1)");
  const Counts c = confusion(saliency, truth, threshold);
  const bool pred_empty = c.tp + c.fp == 0, truth_empty = c.tp + c.fn == 0;
  if (pred_empty && truth_empty) return 1.0;
  if (pred_empty || truth_empty || c.tp == 0) return 0.0;
  const double p = c.tp / (c.tp + c.fp), r = c.tp / (c.tp + c.fn);
  return (1 + beta_sq) * p * r / (beta_sq * p + r);
}

double mae(const Map2d& saliency, const Map2d& truth) {
  require_same_extent(saliency.rows(), saliency.cols(), truth.rows(), truth.cols(), "mae");
  return (saliency - truth).abs().mean();
}

double iou(const LabelMap& a, const LabelMap& b) {
  require_same_extent(a.rows(), a.cols(), b.rows(), b.cols(), "iou");
  const double inter = ((a != 0) && (b != 0)).count();
  const double uni = ((a != 0) || (b != 0)).count();
  return uni == 0 ? 1.0 : inter / uni;
}

double pri(const LabelMap& a, const LabelMap& b) {
  const auto t = contingency(a, b, "pri");
  const double total = pairs(t.n);
  if (total == 0) return 1.0;
  double same_a = 0, same_b = 0, same_both = 0;
  for (const auto& [l, k] : t.a) same_a += pairs(k);
  for (const auto& [l, k] : t.b) same_b += pairs(k);
  for (const auto& [l, k] : t.joint) same_both += pairs(k);
  return (total - same_a - same_b + 2 * same_both) / total;
}

double voi(const LabelMap& a, const LabelMap& b) {
  const auto t = contingency(a, b, "voi");
  auto entropy = [&](const auto& counts) {
    double h = 0;
    for (const auto& [l, k] : counts) h -= (k / t.n) * std::log(k / t.n);
    return h;
  };
  // H(a) + H(b) - 2I = 2H(a,b) - H(a) - H(b)
  return std::max(0.0, 2 * entropy(t.joint) - entropy(t.a) - entropy(t.b));
}

double gce(const LabelMap& a, const LabelMap& b) {
  const auto t = contingency(a, b, "gce");
  double ab = 0, ba = 0;
  for (const auto& [key, k] : t.joint) {
    const double sa = t.a.at(key.first), sb = t.b.at(key.second);
    ab += k * (sa - k) / sa;
    ba += k * (sb - k) / sb;
  }
  return std::min(ab, ba) / t.n;
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& mask) {
  std::vector<std::pair<int, int>> out;
  const Index rows = mask.rows(), cols = mask.cols();
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      if (mask(r, c) == 0) continue;
      const bool edge = (r > 0 && mask(r - 1, c) == 0) || (r + 1 < rows && mask(r + 1, c) == 0) ||
                        (c > 0 && mask(r, c - 1) == 0) || (c + 1 < cols && mask(r, c + 1) == 0);
      if (edge) out.emplace_back(static_cast<int>(r), static_cast<int>(c));
    }
  return out;
}

double bde(const LabelMap& a, const LabelMap& b) {
  require_same_extent(a.rows(), a.cols(), b.rows(), b.cols(), "bde");
  const auto ba = boundary_pixels(a), bb = boundary_pixels(b);
  if (ba.empty() || bb.empty()) throw std::domain_error("bde: mask without boundary pixels");
  auto directed = [&](const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
    const Map2d dist = squared_distance_to(to, a.rows(), a.cols());
    double s = 0;
    for (const auto& [r, c] : from) s += std::sqrt(dist(r, c));
    return s / static_cast<double>(from.size());
  };
  return 0.5 * (directed(ba, bb) + directed(bb, ba));
}

std::vector<PrecisionRecall> pr_curve(const Map2d& saliency, const Map2d& truth,
                                      const std::vector<double>& thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0 && thresholds[i] < 1)) throw std::invalid_argument("pr_curve: threshold outside (0,1)");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
      throw std::invalid_argument("pr_curve: thresholds must be strictly increasing");
  }
  std::vector<PrecisionRecall> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const Counts c = confusion(saliency, truth, t);
    PrecisionRecall pr;
    pr.precision = c.tp + c.fp == 0 ? 1.0 : c.tp / (c.tp + c.fp);
    pr.recall = c.tp + c.fn == 0 ? 1.0 : c.tp / (c.tp + c.fn);
    out.push_back(pr);
  }
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i < 256; ++i) t.push_back(i / 256.0);
  return t;
}

ImageMetrics evaluate_image(const std::string& id, const Map2d& saliency, const Map2d& truth, double threshold,
                            double beta_sq) {
  ImageMetrics m;
  m.id = id;
  m.f_score = f_measure(saliency, truth, threshold, beta_sq);
  m.mae = mae(saliency, truth);
  const LabelMap pred = binarize(saliency, threshold);
  const LabelMap gt = binarize(truth, 0.5);
  m.pri = pri(pred, gt);
  m.voi = voi(pred, gt);
  m.gce = gce(pred, gt);
  try {
    m.bde = bde(pred, gt);
  } catch (const std::domain_error&) {
    m.bde.reset();
  }
  return m;
}

void write_report(std::ostream& os, const std::vector<ImageMetrics>& rows) {
  os << std::setprecision(6) << std::fixed;
  double f = 0, e = 0, p = 0, v = 0, g = 0, b = 0;
  std::size_t nb = 0;
  for (const auto& r : rows) {
    os << r.id << ' ' << r.f_score << ' ' << r.mae << ' ' << r.pri << ' ' << r.voi << ' ' << r.gce << ' ';
    if (r.bde)
      os << *r.bde;
    else
      os << "nan";
    os << '\n';
    f += r.f_score, e += r.mae, p += r.pri, v += r.voi, g += r.gce;
    if (r.bde) b += *r.bde, ++nb;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  os << "AGGREGATE " << f / n << ' ' << e / n << ' ' << p / n << ' ' << v / n << ' ' << g / n << ' ';
  if (nb)
    os << b / static_cast<double>(nb);
  else
    os << "nan";
  os << '\n';
}

void write_pr_csv(std::ostream& os, const std::vector<double>& thresholds, const std::vector<PrecisionRecall>& pr) {
  if (thresholds.size() != pr.size()) throw std::invalid_argument("write_pr_csv: length mismatch");
  os << "threshold,precision,recall\n" << std::setprecision(9);
  for (std::size_t i = 0; i < pr.size(); ++i)
    os << thresholds[i] << ',' << pr[i].precision << ',' << pr[i].recall << '\n';
}

}  // namespace dsf
