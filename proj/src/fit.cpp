#include "heatprobe/fit.hpp"

#include <cmath>

#include "heatprobe/error.hpp"

namespace heatprobe {

ScalingFit fit_power_law(std::span<const double> scales, std::span<const double> values) {
    if (scales.size() != values.size()) throw FitError("scales and values differ in length");
    const std::size_t n = scales.size();
    if (n < 3) throw FitError("a scaling fit needs at least three scales");
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(scales[i] > 0.0) || !(values[i] > 0.0) || !std::isfinite(values[i]))
            throw FitError("scaling fit needs positive finite scales and values");
        sx += std::log(scales[i]);
        sy += std::log(values[i]);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(scales[i]) - mx;
        const double dy = std::log(values[i]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw FitError("scaling fit needs at least two distinct scales");
    ScalingFit f;
    f.exponent = sxy / sxx;
    f.intercept = my - f.exponent * mx;
    const double rss = std::max(syy - f.exponent * sxy, 0.0);
    f.stderr_exponent = n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
    f.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    f.scales.assign(scales.begin(), scales.end());
    f.values.assign(values.begin(), values.end());
    return f;
}

}  // namespace heatprobe
