#pragma once

#include <span>
#include <vector>

namespace heatprobe {

/// Least-squares line log(value) = intercept + exponent * log(scale).
struct ScalingFit {
    double exponent = 0.0;
    double intercept = 0.0;
    double stderr_exponent = 0.0;
    double r_squared = 0.0;
    std::vector<double> scales;
    std::vector<double> values;
};

/// Power-law fit on positive (scale, value) pairs. Throws FitError for
/// fewer than three points, non-positive entries or identical scales.
ScalingFit fit_power_law(std::span<const double> scales, std::span<const double> values);

}  // namespace heatprobe
