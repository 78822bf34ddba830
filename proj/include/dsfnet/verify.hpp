#pragma once

#include "dsfnet/tensor.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dsf {

struct CheckResult {
  std::string group;
  std::string name;
  bool pass = false;
  std::string detail;
};

inline constexpr double kLayerGradTolerance = 1e-6;
inline constexpr double kNetworkGradTolerance = 1e-4;
inline constexpr double kAttentionSumTolerance = 1e-6;
inline constexpr double kFusionTolerance = 1e-12;
inline constexpr double kMetricTolerance = 1e-9;

/// Enumerated unit weights against M N / K + n^2 N^2 / K over the M, N, K, n grid.
std::vector<CheckResult> check_param_counts();

/// Impulse-response support side against (n-1) 2^(K-1) + 1 for K = 1..4, n = 3, 5.
/// A nonzero `dilation_offset` perturbs every branch dilation (mutation test).
std::vector<CheckResult> check_receptive_fields(Index dilation_offset = 0);

/// Centre-row gaps of the concatenated impulse response for K >= 3, with and without fusion.
std::vector<CheckResult> check_gridding();

/// Central differences in double precision for every layer and op.
std::vector<CheckResult> check_layer_gradients(int seeds);

/// Central differences through a two-stage network with attention.
std::vector<CheckResult> check_network_gradients(int seeds);

/// Every attention map sums to one over its spatial positions.
std::vector<CheckResult> check_attention_normalization(int inputs);

/// (1/L) sum (1 + l) x - x == (1/L) sum l x.
std::vector<CheckResult> check_fusion_identity(int inputs);

/// Fast PRI/VOI/GCE/BDE against brute force on random masks, plus the perfect-prediction point.
std::vector<CheckResult> check_metric_oracles(int masks);

struct VerifyOptions {
  Index dilation_offset = 0;
  int gradient_seeds = 3;
  int attention_inputs = 100;
  int fusion_inputs = 20;
  int metric_masks = 100;
};

/// All groups, evaluated concurrently.
std::vector<CheckResult> run_verify(const VerifyOptions& opts);

void print_results(std::ostream& os, const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

}  // namespace dsf
