#pragma once

// Brute-force reference implementations. Quadratic or worse; meant for small inputs only.

#include "dsfnet/dsf_unit.hpp"
#include "dsfnet/metrics.hpp"

#include <vector>

namespace dsf::oracle {

/// Agreement over every unordered pixel pair.
double pri(const LabelMap& a, const LabelMap& b);

/// Entropies from explicit per-segment pixel sets and their intersections.
double voi(const LabelMap& a, const LabelMap& b);

/// Per-pixel refinement error from the explicit segment sets containing each pixel.
double gce(const LabelMap& a, const LabelMap& b);

/// Pixels valued 1 with any 4-neighbour valued 0.
std::vector<std::pair<int, int>> boundary(const LabelMap& mask);

/// All-pairs nearest-boundary distances. Throws std::domain_error on an empty boundary.
double bde(const LabelMap& a, const LabelMap& b);

/// Total number of convolution weights registered for one unit, counted tensor by tensor.
Index enumerate_dsf_weights(const DsfConfig& cfg);

struct ImpulseResponse {
  Index side = 0;               // side of the bounding box of the support
  std::vector<bool> center_row; // support of the centre row over the bounding box columns
  bool interior_gap = false;    // a zero between the first and last support column of the centre row
};

/// Feeds a unit impulse through the instant conv, branches, fusion and concatenation of a unit
/// with every weight set to 1 and reports the support of the channel-summed output.
ImpulseResponse impulse_response(const DsfConfig& cfg);

}  // namespace dsf::oracle
