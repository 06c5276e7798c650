#pragma once

#include <functional>
#include <span>
#include <vector>

namespace heatprobe::quad {

using Integrand = std::function<double(double)>;

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int order);
    double apply(const Integrand& f, double a, double b) const;
};

struct AdaptiveOptions {
    double abs_tol = 1e-11;
    double rel_tol = 1e-11;
    int order = 10;
    int max_depth = 40;
    long max_panels = 200000;
};

/// Adaptive composite Gauss-Legendre on [a, b]; panels are bisected until
/// the one-panel and two-half-panel estimates agree.
/// Throws ConvergenceError when the error target or the panel budget is missed.
double integrate(const Integrand& f, double a, double b, const AdaptiveOptions& opt = {});

/// Same, with the interval pre-split at the given (sorted or unsorted)
/// breakpoints; points outside [a, b] are ignored.
double integrate(const Integrand& f, double a, double b, std::span<const double> breaks,
                 const AdaptiveOptions& opt = {});

/// Integral over [0, length] of a function with an integrable power
/// singularity at 0, using tau = length * w^grading.
double integrate_graded(const Integrand& f, double length, double grading,
                        const AdaptiveOptions& opt = {});

/// Breakpoints clustering around `centers` at multiples of `width`, clipped
/// to [lo, hi]. Used for integrands shaped like heat kernels.
std::vector<double> peak_breaks(std::span<const double> centers, double width, double lo,
                                double hi);

}  // namespace heatprobe::quad
