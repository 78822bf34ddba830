#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dsf {

using Map2d = Eigen::ArrayXXd;     // saliency / ground-truth maps, rows x cols
using LabelMap = Eigen::ArrayXXi;  // segment identifiers

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

inline constexpr double kDefaultBetaSq = 0.3;
inline constexpr double kDefaultThreshold = 0.5;

/// 1 where map >= threshold.
LabelMap binarize(const Map2d& map, double threshold = kDefaultThreshold);

/// (1+b^2)PR / (b^2 P + R) of the binarized map. Both sides empty gives 1, one side empty gives 0.
double f_measure(const Map2d& saliency, const Map2d& truth, double threshold = kDefaultThreshold,
                 double beta_sq = kDefaultBetaSq);

double mae(const Map2d& saliency, const Map2d& truth);

double iou(const LabelMap& a, const LabelMap& b);

/// Fraction of unordered pixel pairs on whose grouping a and b agree.
double pri(const LabelMap& a, const LabelMap& b);

/// Variation of information H(a) + H(b) - 2 I(a;b), in nats.
double voi(const LabelMap& a, const LabelMap& b);

/// Global consistency error: (1/n) min(sum_x E(a,b,x), sum_x E(b,a,x)).
double gce(const LabelMap& a, const LabelMap& b);

/// Inner 4-connected boundary: foreground pixels with a 4-neighbour in the background.
std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& mask);

/// Symmetric mean nearest-boundary distance. Throws std::domain_error when a mask has no boundary.
double bde(const LabelMap& a, const LabelMap& b);

/// Precision/recall at each threshold (strictly increasing in (0,1)). No predicted positives
/// gives precision 1; an empty truth gives recall 1.
std::vector<PrecisionRecall> pr_curve(const Map2d& saliency, const Map2d& truth,
                                      const std::vector<double>& thresholds);

/// 1/256, 2/256, ..., 255/256.
std::vector<double> default_thresholds();

struct ImageMetrics {
  std::string id;
  double f_score = 0, mae = 0, pri = 0, voi = 0, gce = 0;
  std::optional<double> bde;  // empty when either mask has no boundary
};

/// All metrics for one image; region metrics use the two-segment partition at `threshold`.
ImageMetrics evaluate_image(const std::string& id, const Map2d& saliency, const Map2d& truth,
                            double threshold = kDefaultThreshold, double beta_sq = kDefaultBetaSq);

/// `id f mae pri voi gce bde` per line, then an AGGREGATE line of means (bde over defined values).
void write_report(std::ostream& os, const std::vector<ImageMetrics>& rows);

/// threshold,precision,recall
void write_pr_csv(std::ostream& os, const std::vector<double>& thresholds, const std::vector<PrecisionRecall>& pr);

}  // namespace dsf
