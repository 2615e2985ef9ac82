#pragma once

#include <Eigen/Core>

#include <vector>

#include "vocnet/discriminator.hpp"

namespace vocnet {

struct SaliencyMap {
  Eigen::VectorXd values;   // one per input channel, in [0, 1]
  bool degenerate = false;  // all-zero map: no activation or no gradient reached the trunk
};

// Abs-CAM on the pooled output of the last conv stage. Channel weights are
// the position-mean of |dL/dA| with L the composite loss evaluated against
// the model's own prediction; the map is sum_c w_c |A_c|, linearly resampled
// to the input length and divided by its maximum.
SaliencyMap abs_cam(const DiscriminatorModel& model, const Eigen::VectorXd& spectrum);

// Half-sample aligned linear resampling (each source sample covers an equal
// span of the output). Throws DomainError for empty input or length < 1.
Eigen::VectorXd resample_linear(const Eigen::VectorXd& source, Eigen::Index length);

// Mask of the ceil(fraction * n) largest entries; ties broken by lower index.
std::vector<bool> top_fraction_mask(const Eigen::VectorXd& values, double fraction);

// |a and b| / |a or b|; 0 when both are empty. Throws DimensionError on length mismatch.
double jaccard(const std::vector<bool>& a, const std::vector<bool>& b);

}  // namespace vocnet
