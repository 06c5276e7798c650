#pragma once

// Heat kernel on [0, 1] with reflecting (Neumann) or absorbing (Dirichlet)
// walls, and the integral estimates of the kernel used by the rest of the
// library.

namespace heatprobe::kernel {

enum class Method { automatic, cosine_series, image_sum };
enum class Boundary { neumann, dirichlet };

struct KernelConfig {
    Method method = Method::automatic;
    Boundary boundary = Boundary::neumann;
    double truncation_tol = 1e-12;
    int max_terms = 200000;

    /// automatic picks image sums below this time, eigenfunction series above
    static constexpr double kSwitchTime = 0.05;
};

/// Free-space kernel (4 pi t)^{-1/2} exp(-r^2 / 4t).
double free_space(double t, double r);

/// G_t(x, y). Throws DomainError for t <= 0 and TruncationError when the
/// series needs more than cfg.max_terms terms.
double eval_green(const KernelConfig& cfg, double t, double x, double y);

/// Integral of G_t(x, .) over [0, 1] by adaptive quadrature (tolerance 1e-9).
double kernel_mass(const KernelConfig& cfg, double t, double x);

struct SemigroupResidual {
    double lhs;  // int_0^1 G_{s-r}(y, v) G_{t-r}(x, v) dv
    double rhs;  // G_{s+t-2r}(x, y)
    double absolute() const;
    /// relative to |rhs| once the magnitude exceeds 1, absolute below
    double scaled() const;
};

/// Chapman-Kolmogorov identity check. Requires r < s <= t.
SemigroupResidual semigroup_residual(const KernelConfig& cfg, double s, double t, double r,
                                     double x, double y);

/// int_a^b int_0^1 G_s(x, y)^2 dy ds, requires 0 < a < b.
double l2_window(const KernelConfig& cfg, double a, double b, double x);

/// [int_{t-eps}^t int_{x-sqrt(eps)}^{x+sqrt(eps)} G_{t-s}(x, y)^2 dy ds] / sqrt(eps).
double local_l2_lower(const KernelConfig& cfg, double t, double eps, double x);

/// [int_{t-eps}^t int_0^1 G_{t-s}(x, y)^{2q} dy ds] / eps^{3/2 - q}, 0 < q < 3/2.
double l2q_upper(const KernelConfig& cfg, double t, double eps, double x, double q);

/// int_0^t int_0^1 G_{t-r}(x, v)^2 dv dr: variance of the linear equation
/// with unit noise at (t, x).
double variance_integral(const KernelConfig& cfg, double t, double x);

/// int int g(r, v)^2 dv dr with g = 1{r<=t} G_{t-r}(x, .) - 1{r<=s} G_{s-r}(y, .),
/// i.e. the variance of u(t,x) - u(s,y) in the linear case. Requires s <= t.
double increment_variance_integral(const KernelConfig& cfg, double s, double y, double t,
                                   double x);

/// int_0^s int_0^1 G_{s-r}(y, v) G_{t-r}(x, v) dv dr (linear covariance), s <= t.
double covariance_integral(const KernelConfig& cfg, double s, double y, double t, double x);

}  // namespace heatprobe::kernel
