#include "heatprobe/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include "heatprobe/error.hpp"

namespace heatprobe::quad {

GaussLegendre::GaussLegendre(int order) : nodes(order), weights(order) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    for (int i = 0; i < order; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double step = p1 / dp;
            x -= step;
            if (std::abs(step) < 1e-16) break;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

double GaussLegendre::apply(const Integrand& f, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * f(mid + half * nodes[i]);
    return half * sum;
}

namespace {

const GaussLegendre& rule(int order) {
    static const GaussLegendre r10(10);
    if (order == 10) return r10;
    thread_local std::deque<GaussLegendre> cache;
    for (const auto& r : cache)
        if (static_cast<int>(r.nodes.size()) == order) return r;
    cache.emplace_back(order);
    return cache.back();
}

struct Panel {
    double value;
    double abs_err;
};

Panel refine(const Integrand& f, const GaussLegendre& gl, double a, double b, double whole,
             double tol, int depth, int max_depth, long& budget) {
    if (--budget < 0) return {whole, std::numeric_limits<double>::infinity()};
    const double m = 0.5 * (a + b);
    const double left = gl.apply(f, a, m);
    const double right = gl.apply(f, m, b);
    const double split = left + right;
    const double err = std::abs(split - whole);
    if (err <= tol || !std::isfinite(split)) return {split, err};
    if (depth >= max_depth) return {split, err};
    const Panel l = refine(f, gl, a, m, left, 0.5 * tol, depth + 1, max_depth, budget);
    const Panel r = refine(f, gl, m, b, right, 0.5 * tol, depth + 1, max_depth, budget);
    return {l.value + r.value, l.abs_err + r.abs_err};
}

}  // namespace

double integrate(const Integrand& f, double a, double b, const AdaptiveOptions& opt) {
    if (a == b) return 0.0;
    const auto& gl = rule(opt.order);
    const double whole = gl.apply(f, a, b);
    const double tol = std::max(opt.abs_tol, opt.rel_tol * std::abs(whole));
    long budget = opt.max_panels;
    const Panel p = refine(f, gl, a, b, whole, tol, 0, opt.max_depth, budget);
    if (budget < 0) throw ConvergenceError("adaptive quadrature exhausted its panel budget", p.abs_err);
    if (!std::isfinite(p.value))
        throw ConvergenceError("quadrature produced a non-finite value", p.abs_err);
    const double final_tol = std::max(opt.abs_tol, opt.rel_tol * std::abs(p.value));
    if (p.abs_err > 10.0 * final_tol)
        throw ConvergenceError("adaptive quadrature did not converge", p.abs_err);
    return p.value;
}

double integrate(const Integrand& f, double a, double b, std::span<const double> breaks,
                 const AdaptiveOptions& opt) {
    std::vector<double> pts{a, b};
    for (double x : breaks)
        if (x > a && x < b) pts.push_back(x);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const double width = b - a;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        AdaptiveOptions local = opt;
        local.abs_tol = opt.abs_tol * (pts[i + 1] - pts[i]) / width;
        total += integrate(f, pts[i], pts[i + 1], local);
    }
    return total;
}

double integrate_graded(const Integrand& f, double length, double grading,
                        const AdaptiveOptions& opt) {
    const auto g = [&](double w) {
        if (w <= 0.0) return 0.0;
        return f(length * std::pow(w, grading)) * length * grading * std::pow(w, grading - 1.0);
    };
    // geometric breakpoints near w = 0 where the mapped integrand may still vary
    std::vector<double> breaks;
    for (double w = 0.5; w > 1e-4; w *= 0.5) breaks.push_back(w);
    return integrate(g, 0.0, 1.0, breaks, opt);
}

std::vector<double> peak_breaks(std::span<const double> centers, double width, double lo,
                                double hi) {
    static constexpr double kMultiples[] = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    std::vector<double> out;
    for (double c : centers) {
        for (double k : kMultiples) {
            for (double sgn : {-1.0, 1.0}) {
                const double x = c + sgn * k * width;
                if (x > lo && x < hi) out.push_back(x);
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace heatprobe::quad
