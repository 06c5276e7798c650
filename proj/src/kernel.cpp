#include "heatprobe/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "heatprobe/error.hpp"
#include "heatprobe/quadrature.hpp"

namespace heatprobe::kernel {

namespace {

constexpr double kPi = std::numbers::pi;

// Sum over n in Z of p_t(shift - 2n) for shift in [0, 2].
double image_series(const KernelConfig& cfg, double t, double shift) {
    double sum = free_space(t, shift);
    for (int k = 1; k <= cfg.max_terms; ++k) {
        sum += free_space(t, shift - 2.0 * k) + free_space(t, shift + 2.0 * k);
        // remaining terms sit at distance >= 2k from the shift
        const double q = std::exp(-(2.0 * k + 1.0) / t);
        const double tail = 2.0 * free_space(t, 2.0 * k) / (1.0 - q);
        if (tail < 0.25 * cfg.truncation_tol) return sum;
    }
    std::ostringstream msg;
    msg << "image sum not converged at t=" << t << " after " << cfg.max_terms << " terms";
    throw TruncationError(msg.str(), cfg.max_terms, free_space(t, 2.0 * cfg.max_terms));
}

double eigen_series(const KernelConfig& cfg, double t, double x, double y) {
    const bool neumann = cfg.boundary == Boundary::neumann;
    double sum = 0.0;
    for (int n = 1; n <= cfg.max_terms; ++n) {
        const double decay = std::exp(-double(n) * n * kPi * kPi * t);
        const double modes = neumann ? std::cos(n * kPi * x) * std::cos(n * kPi * y)
                                     : std::sin(n * kPi * x) * std::sin(n * kPi * y);
        sum += decay * modes;
        const double next = std::exp(-double(n + 1) * (n + 1) * kPi * kPi * t);
        const double ratio = std::exp(-(2.0 * n + 3.0) * kPi * kPi * t);
        if (2.0 * next / (1.0 - ratio) < cfg.truncation_tol) return (neumann ? 1.0 : 0.0) + 2.0 * sum;
    }
    std::ostringstream msg;
    msg << "eigenfunction series not converged at t=" << t << " after " << cfg.max_terms
        << " terms";
    throw TruncationError(msg.str(), cfg.max_terms,
                          2.0 * std::exp(-double(cfg.max_terms) * cfg.max_terms * kPi * kPi * t));
}

const quad::AdaptiveOptions kQuadTol{.abs_tol = 1e-10, .rel_tol = 1e-10};
// outer integrals of inner quadratures: the inner error floor limits what is reachable
const quad::AdaptiveOptions kOuterTol{.abs_tol = 1e-12, .rel_tol = 1e-8};

// int_0^1 f(G_tau(x, y)) dy with panels clustered where the kernel peaks.
double integrate_in_y(const KernelConfig& cfg, double tau, double x, double lo, double hi,
                      double power) {
    // far from walls and window edges the integral is the free-space one to
    // below double precision; panels could not resolve a peak narrower than ulp(x)
    const double reach = std::min({x - lo, hi - x, x, 1.0 - x});
    if (reach * reach / (4.0 * tau) > 45.0)
        return std::pow(4.0 * kPi * tau, -0.5 * power) * std::sqrt(4.0 * kPi * tau / power);
    const std::array<double, 3> centers{x, 0.0, 1.0};
    const auto breaks = quad::peak_breaks(centers, std::sqrt(tau), lo, hi);
    return quad::integrate(
        [&](double y) { return std::pow(eval_green(cfg, tau, x, y), power); }, lo, hi, breaks,
        kQuadTol);
}

}  // namespace

double free_space(double t, double r) {
    return std::exp(-r * r / (4.0 * t)) / std::sqrt(4.0 * kPi * t);
}

double eval_green(const KernelConfig& cfg, double t, double x, double y) {
    if (!(t > 0.0)) throw DomainError("heat kernel requires t > 0");
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
        throw DomainError("heat kernel positions must lie in [0, 1]");
    // absorbing walls: exact zero instead of cancellation residue
    if (cfg.boundary == Boundary::dirichlet && (x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0)) return 0.0;
    Method method = cfg.method;
    if (method == Method::automatic)
        method = t < KernelConfig::kSwitchTime ? Method::image_sum : Method::cosine_series;
    if (method == Method::cosine_series) return eigen_series(cfg, t, x, y);
    // |x - y| and x + y keep the evaluation exactly symmetric in (x, y)
    const double direct = image_series(cfg, t, std::abs(x - y));
    const double mirrored = image_series(cfg, t, x + y);
    return cfg.boundary == Boundary::neumann ? direct + mirrored : direct - mirrored;
}

double kernel_mass(const KernelConfig& cfg, double t, double x) {
    if (!(t > 0.0)) throw DomainError("kernel_mass requires t > 0");
    const std::array<double, 3> centers{x, 0.0, 1.0};
    const auto breaks = quad::peak_breaks(centers, std::sqrt(t), 0.0, 1.0);
    return quad::integrate([&](double y) { return eval_green(cfg, t, x, y); }, 0.0, 1.0, breaks,
                           {.abs_tol = 1e-9, .rel_tol = 1e-12});
}

double SemigroupResidual::absolute() const { return std::abs(lhs - rhs); }

double SemigroupResidual::scaled() const {
    const double mag = std::abs(rhs);
    return mag > 1.0 ? absolute() / mag : absolute();
}

SemigroupResidual semigroup_residual(const KernelConfig& cfg, double s, double t, double r,
                                     double x, double y) {
    if (!(r < s && s <= t)) throw DomainError("semigroup check requires r < s <= t");
    const double a = s - r;
    const double b = t - r;
    std::array<double, 5> centers{x, y, 0.0, 1.0, 0.5 * (x + y)};
    auto breaks = quad::peak_breaks(centers, std::sqrt(std::min(a, b)), 0.0, 1.0);
    const double lhs = quad::integrate(
        [&](double v) { return eval_green(cfg, a, y, v) * eval_green(cfg, b, x, v); }, 0.0, 1.0,
        breaks, {.abs_tol = 1e-12, .rel_tol = 1e-11});
    return {lhs, eval_green(cfg, a + b, x, y)};
}

double l2_window(const KernelConfig& cfg, double a, double b, double x) {
    if (!(a > 0.0)) throw DomainError("l2_window requires a > 0");
    if (!(b > a)) throw DomainError("l2_window requires a < b");
    // s = w^2 flattens the s^{-1/2} growth of the inner integral
    const double wa = std::sqrt(a);
    const double wb = std::sqrt(b);
    return quad::integrate(
        [&](double w) { return 2.0 * w * integrate_in_y(cfg, w * w, x, 0.0, 1.0, 2.0); }, wa, wb,
        kOuterTol);
}

double local_l2_lower(const KernelConfig& cfg, double t, double eps, double x) {
    if (!(eps > 0.0) || eps > t) throw DomainError("local_l2_lower requires 0 < eps <= t");
    const double half = std::sqrt(eps);
    if (x - half < 0.0 || x + half > 1.0)
        throw DomainError("local_l2_lower window leaves [0, 1]");
    const double integral = quad::integrate_graded(
        [&](double tau) { return integrate_in_y(cfg, tau, x, x - half, x + half, 2.0); }, eps, 2.0,
        kOuterTol);
    return integral / half;
}

double l2q_upper(const KernelConfig& cfg, double t, double eps, double x, double q) {
    if (!(q > 0.0) || q >= 1.5) throw DomainError("l2q_upper requires 0 < q < 3/2");
    if (!(eps > 0.0) || eps > t) throw DomainError("l2q_upper requires 0 < eps <= t");
    // inner integral behaves like tau^{1/2 - q}; this grading makes it bounded
    const double grading = 1.0 / (1.5 - q);
    const double integral = quad::integrate_graded(
        [&](double tau) { return integrate_in_y(cfg, tau, x, 0.0, 1.0, 2.0 * q); }, eps, grading,
        kOuterTol);
    return integral / std::pow(eps, 1.5 - q);
}

double variance_integral(const KernelConfig& cfg, double t, double x) {
    if (!(t > 0.0)) throw DomainError("variance_integral requires t > 0");
    return quad::integrate_graded([&](double tau) { return eval_green(cfg, 2.0 * tau, x, x); },
                                  t, 2.0, kQuadTol);
}

double covariance_integral(const KernelConfig& cfg, double s, double y, double t, double x) {
    if (!(s > 0.0) || s > t) throw DomainError("covariance_integral requires 0 < s <= t");
    const double lag = t - s;
    // int_0^s G_{lag + 2 tau}(x, y) d tau, singular only when lag = 0 and x = y
    return quad::integrate_graded(
        [&](double tau) { return eval_green(cfg, lag + 2.0 * tau, x, y); }, s, 2.0, kQuadTol);
}

double increment_variance_integral(const KernelConfig& cfg, double s, double y, double t,
                                   double x) {
    if (s > t) throw DomainError("increment_variance_integral requires s <= t");
    return variance_integral(cfg, t, x) + variance_integral(cfg, s, y) -
           2.0 * covariance_integral(cfg, s, y, t, x);
}

}  // namespace heatprobe::kernel
