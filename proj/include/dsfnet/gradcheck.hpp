#pragma once

#include "dsfnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

namespace dsf {

template <typename Scalar>
using ScalarFn = std::function<Var<Scalar>(Var<Scalar>)>;

struct GradCheckReport {
  double max_relative = 0;  // max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-12)
  double normwise = 0;      // max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, 1e-12)
};

/// Analytic gradient of `f` at `x` against numeric derivatives. The numeric derivative is a
/// Richardson-extrapolated central difference, (4 D(h/2) - D(h)) / 3, at the widest of
/// h = 100 epsilon, 10 epsilon, epsilon whose second differences at h, h/2 and h/4 agree. A kink
/// inside the step makes the second difference grow like 1/h; a smooth function keeps it flat.
/// When no step qualifies the narrowest is used.
/// `f` is re-run on a fresh tape for every probe, so it must be deterministic.
template <typename Scalar>
GradCheckReport finite_diff_report(const ScalarFn<Scalar>& f, const Tensor<Scalar>& x, Scalar epsilon) {
  if (!(epsilon > Scalar(0))) throw std::invalid_argument("finite_diff_check: epsilon must be positive");

  Tensor<Scalar> analytic;
  {
    Tape<Scalar> tape;
    auto input = tape.leaf(x, true);
    auto out = f(input);
    if (out.value().size() != 1) throw std::invalid_argument("finite_diff_check: f must return a scalar");
    analytic = tape.backward(out)[input];
  }

  auto evaluate = [&](const Tensor<Scalar>& probe) {
    Tape<Scalar> tape;
    return static_cast<double>(f(tape.leaf(probe, false)).value().item());
  };

  GradCheckReport report;
  const double center = evaluate(x);
  const double noise = 1e-14 * std::max(std::abs(center), 1e-30);
  double worst_abs = 0.0, scale = 1e-12;
  Tensor<Scalar> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar saved = probe[i];
    auto side = [&](Scalar h) {
      probe[i] = saved + h;
      const double up = evaluate(probe);
      probe[i] = saved - h;
      const double down = evaluate(probe);
      probe[i] = saved;
      return std::pair{up, down};
    };
    double numeric = 0.0;
    for (Scalar step : {epsilon * Scalar(100), epsilon * Scalar(10), epsilon}) {
      const double h = static_cast<double>(step);
      const auto [up, down] = side(step);
      const auto [up2, down2] = side(step / Scalar(2));
      const auto [up4, down4] = side(step / Scalar(4));
      numeric = (4.0 * (up2 - down2) / h - (up - down) / (2.0 * h)) / 3.0;
      const double curv[3] = {(up - 2.0 * center + down) / (h * h), (up2 - 2.0 * center + down2) * 4.0 / (h * h),
                              (up4 - 2.0 * center + down4) * 16.0 / (h * h)};
      auto agree = [&](double p, double q) {
        return std::abs(p - q) <= 1e-3 * std::max(std::abs(p), std::abs(q)) + 160.0 * noise / (h * h);
      };
      if (agree(curv[0], curv[1]) && agree(curv[1], curv[2])) break;
    }
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    report.max_relative = std::max(report.max_relative, std::abs(a - numeric) / denom);
    worst_abs = std::max(worst_abs, std::abs(a - numeric));
    scale = std::max({scale, std::abs(a), std::abs(numeric)});
  }
  report.normwise = worst_abs / scale;
  return report;
}

/// Max over elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
template <typename Scalar>
double finite_diff_check(const ScalarFn<Scalar>& f, const Tensor<Scalar>& x, Scalar epsilon) {
  return finite_diff_report(f, x, epsilon).max_relative;
}

}  // namespace dsf
