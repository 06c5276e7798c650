#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "heatprobe/error.hpp"
#include "heatprobe/kernel.hpp"

using namespace heatprobe;
using namespace heatprobe::kernel;

namespace {

// Brute-force method of images, independent of the library's truncation logic.
double image_oracle(double t, double x, double y, bool neumann = true) {
    double sum = 0.0;
    for (int n = -60; n <= 60; ++n) {
        const double a = x - y - 2.0 * n;
        const double b = x + y - 2.0 * n;
        const double pa = std::exp(-a * a / (4 * t)) / std::sqrt(4 * std::numbers::pi * t);
        const double pb = std::exp(-b * b / (4 * t)) / std::sqrt(4 * std::numbers::pi * t);
        sum += neumann ? pa + pb : pa - pb;
    }
    return sum;
}

KernelConfig with(Method m, Boundary b = Boundary::neumann) {
    KernelConfig cfg;
    cfg.method = m;
    cfg.boundary = b;
    return cfg;
}

}  // namespace

TEST_CASE("only the constant mode survives at large time") {
    CHECK(eval_green({}, 10.0, 0.3, 0.7) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("short-time value matches the image-sum oracle") {
    const double v = eval_green({}, 0.01, 0.5, 0.5);
    CHECK(std::abs(v - image_oracle(0.01, 0.5, 0.5)) <= 1e-14 * v);
    CHECK(v == doctest::Approx(1.0 / std::sqrt(4 * std::numbers::pi * 0.01)).epsilon(1e-6));
    // the cosine series reaches the same value
    CHECK(eval_green(with(Method::cosine_series), 0.01, 0.5, 0.5) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("evaluation is exactly symmetric") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    std::uniform_real_distribution<double> logt(-6.0, 1.0);
    for (Method m : {Method::automatic, Method::cosine_series, Method::image_sum}) {
        for (int i = 0; i < 200; ++i) {
            const double t = std::pow(10.0, logt(gen));
            const double x = pos(gen);
            const double y = pos(gen);
            CHECK(eval_green(with(m), t, x, y) == eval_green(with(m), t, y, x));
        }
    }
}

TEST_CASE("domain and truncation errors") {
    CHECK_THROWS_AS(eval_green({}, 0.0, 0.2, 0.3), DomainError);
    CHECK_THROWS_AS(eval_green({}, -1.0, 0.2, 0.3), DomainError);
    CHECK_THROWS_AS(eval_green({}, 0.1, 1.2, 0.3), DomainError);
    KernelConfig tight = with(Method::cosine_series);
    tight.max_terms = 5;
    try {
        eval_green(tight, 1e-5, 0.5, 0.5);
        FAIL("expected TruncationError");
    } catch (const TruncationError& e) {
        CHECK(e.terms_used == 5);
        CHECK(e.tail_bound > 0.0);
    }
    CHECK_THROWS_AS(kernel_mass({}, 0.0, 0.5), DomainError);
}

TEST_CASE("mass is conserved") {
    CHECK(kernel_mass({}, 0.05, 0.5) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(std::abs(kernel_mass({}, 1e-4, 0.01) - 1.0) <= 1e-8);
    CHECK(std::abs(kernel_mass({}, 2.0, 0.9) - 1.0) <= 1e-8);
    for (double t : {1e-6, 1e-3, 0.049, 0.051, 3.0})
        for (double x : {0.0, 1e-4, 0.37, 1.0}) CHECK(std::abs(kernel_mass({}, t, x) - 1.0) <= 1e-8);
}

TEST_CASE("reduced invariant lattice: positivity, symmetry, method agreement") {
    const KernelConfig cos_cfg = with(Method::cosine_series);
    const KernelConfig img_cfg = with(Method::image_sum);
    for (int it = 0; it < 12; ++it) {
        const double t = 1e-6 * std::pow(1e7, it / 11.0);
        for (int i = 0; i <= 15; ++i) {
            for (int j = 0; j <= 15; ++j) {
                const double x = i / 15.0;
                const double y = j / 15.0;
                const double g = eval_green({}, t, x, y);
                // far pairs at t = 1e-6 underflow to zero in doubles
                if (free_space(t, std::abs(x - y)) > 0.0)
                    CHECK(g > 0.0);
                else
                    CHECK(g >= 0.0);
                CHECK(std::abs(eval_green(cos_cfg, t, x, y) - eval_green(img_cfg, t, x, y)) <=
                      10 * 1e-12);
            }
        }
    }
}

TEST_CASE("semigroup identity") {
    const auto a = semigroup_residual({}, 0.2, 0.2, 0.1, 0.5, 0.5);
    CHECK(a.scaled() <= 1e-6);
    CHECK(a.lhs == doctest::Approx(eval_green({}, 0.2, 0.5, 0.5)).epsilon(1e-6));
    CHECK(semigroup_residual({}, 0.3, 0.5, 0.1, 0.2, 0.8).scaled() <= 1e-6);
    // near-degenerate: s - r = 1e-3 with s = t, magnitude ~ G_{2e-3}(x, x)
    const auto c = semigroup_residual({}, 0.4, 0.4, 0.4 - 1e-3, 0.3, 0.3);
    CHECK(c.rhs > 5.0);
    CHECK(c.absolute() / c.rhs <= 1e-6);
    CHECK_THROWS_AS(semigroup_residual({}, 0.1, 0.2, 0.1, 0.5, 0.5), DomainError);
    CHECK_THROWS_AS(semigroup_residual({}, 0.3, 0.2, 0.1, 0.5, 0.5), DomainError);

    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 60; ++i) {
        double r = u(gen), s = u(gen), t = u(gen);
        if (r > s) std::swap(r, s);
        if (s > t) std::swap(s, t);
        if (r > s) std::swap(r, s);
        if (s - r < 1e-4) continue;
        CHECK(semigroup_residual({}, s, t, r, u(gen), u(gen)).scaled() <= 1e-6);
    }
}

TEST_CASE("l2 window") {
    const double a = 0.01, b = 0.02;
    const double v = l2_window({}, a, b, 0.5);
    CHECK(v <= (b - a) / (std::sqrt(b) + std::sqrt(a)));
    // independent route: the inner integral equals G_{2s}(x, x)
    boost::math::quadrature::tanh_sinh<double> ts;
    const double oracle = ts.integrate([](double s) { return eval_green({}, 2 * s, 0.5, 0.5); }, a, b);
    CHECK(v == doctest::Approx(oracle).epsilon(1e-8));
    // free-space heuristic (2 / sqrt(8 pi)) (sqrt b - sqrt a); wall images add ~exp(-1/8s)
    CHECK(v == doctest::Approx(2.0 / std::sqrt(8 * std::numbers::pi) * (std::sqrt(b) - std::sqrt(a)))
                   .epsilon(3e-3));

    CHECK(l2_window({}, 1.0 - 1e-9, 1.0, 0.5) < 1e-8);
    const double w1 = l2_window({}, 0.25, 0.6, 0.1);
    const double w2 = l2_window({}, 0.25, 1.0, 0.1);
    CHECK(w1 > 0.0);
    CHECK(w2 > w1);
    CHECK_THROWS_AS(l2_window({}, 0.0, 1.0, 0.5), DomainError);
}

TEST_CASE("local l2 lower ratio") {
    const double r3 = local_l2_lower({}, 0.5, 1e-3, 0.5);
    const double r4 = local_l2_lower({}, 0.5, 1e-4, 0.5);
    CHECK(r3 >= 0.3);
    CHECK(r4 >= 0.3);
    CHECK(std::abs(r4 - r3) <= 0.05 * r3);
    // free-space value: erf(1/sqrt2) ... bounded by 1/sqrt(2 pi)
    CHECK(r3 <= 1.0 / std::sqrt(2 * std::numbers::pi) + 1e-9);
    CHECK(local_l2_lower({}, 1e-3, 1e-3, 0.5) >= 0.3);
    CHECK_THROWS_AS(local_l2_lower({}, 0.5, 1e-2, 0.05), DomainError);
    CHECK_THROWS_AS(local_l2_lower({}, 1e-3, 1e-2, 0.5), DomainError);
}

TEST_CASE("l2q upper ratio") {
    CHECK(l2q_upper({}, 0.5, 1e-3, 0.5, 1.0) <= 1.0);
    for (double q : {0.5, 1.25}) {
        const double r2 = l2q_upper({}, 0.5, 1e-2, 0.5, q);
        const double r3 = l2q_upper({}, 0.5, 1e-3, 0.5, q);
        const double r4 = l2q_upper({}, 0.5, 1e-4, 0.5, q);
        CHECK(std::isfinite(r2));
        const double lo = std::min({r2, r3, r4});
        const double hi = std::max({r2, r3, r4});
        CHECK(hi <= 1.1 * lo);
    }
    // q = 1/2 integrates the mass exactly
    CHECK(l2q_upper({}, 0.5, 1e-3, 0.5, 0.5) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK_THROWS_AS(l2q_upper({}, 0.5, 1e-3, 0.5, 1.5), DomainError);
}

TEST_CASE("interior free-space proximity at short times") {
    for (double t : {1e-6, 1e-5, 1e-4, 5e-4, 1e-3}) {
        for (double x = 0.1; x <= 0.9 + 1e-12; x += 0.05)
            for (double y = 0.1; y <= 0.9 + 1e-12; y += 0.05)
                CHECK(std::abs(eval_green({}, t, x, y) - free_space(t, x - y)) <= 1e-3);
    }
}

TEST_CASE("dirichlet kernel") {
    const KernelConfig dir = with(Method::automatic, Boundary::dirichlet);
    CHECK(eval_green(dir, 0.01, 0.3, 0.6) == doctest::Approx(image_oracle(0.01, 0.3, 0.6, false)).epsilon(1e-12));
    CHECK(eval_green(with(Method::cosine_series, Boundary::dirichlet), 0.2, 0.3, 0.6) ==
          doctest::Approx(eval_green(with(Method::image_sum, Boundary::dirichlet), 0.2, 0.3, 0.6)).epsilon(1e-11));
    CHECK(std::abs(eval_green(dir, 0.1, 0.0, 0.4)) < 1e-12);
    // exactly zero on the walls for every method, never a signed residue
    for (Method m : {Method::automatic, Method::image_sum, Method::cosine_series})
        for (double t : {1e-6, 3e-6, 0.1, 10.0})
            for (double y : {0.0, 0.5, 0.99, 1.0}) {
                if (m == Method::cosine_series && t < 1e-3) continue;
                CHECK(eval_green(with(m, Boundary::dirichlet), t, 1.0, y) == 0.0);
                CHECK(eval_green(with(m, Boundary::dirichlet), t, y, 0.0) == 0.0);
            }
    // absorbing walls lose mass
    CHECK(kernel_mass(dir, 0.1, 0.5) < 1.0);
    // the kernel estimates transfer
    CHECK(local_l2_lower(dir, 0.5, 1e-3, 0.5) >= 0.3);
    CHECK(l2q_upper(dir, 0.5, 1e-3, 0.5, 1.0) <= 1.0);
    CHECK(l2_window(dir, 0.01, 0.02, 0.5) <= 0.01 / (std::sqrt(0.02) + std::sqrt(0.01)));
}

TEST_CASE("linear variance integrals against a direct double integral") {
    using boost::math::quadrature::gauss_kronrod;
    const double t = 0.3, x = 0.5;
    // int_0^t int_0^1 G_{t-r}(x, v)^2 dv dr with tau = w^2
    const double direct = gauss_kronrod<double, 31>::integrate(
        [&](double w) {
            const double tau = w * w;
            return 2 * w * gauss_kronrod<double, 61>::integrate(
                               [&](double v) {
                                   const double g = eval_green({}, tau, x, v);
                                   return g * g;
                               },
                               0.0, 1.0, 15, 1e-12);
        },
        0.0, std::sqrt(t), 15, 1e-11);
    CHECK(variance_integral({}, t, x) == doctest::Approx(direct).epsilon(1e-7));

    // increment variance is a nonnegative quadratic form, vanishing at coincidence
    CHECK(increment_variance_integral({}, 0.3, 0.5, 0.3, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    const double near = increment_variance_integral({}, 0.3, 0.49, 0.3, 0.5);
    const double far = increment_variance_integral({}, 0.3, 0.4, 0.3, 0.5);
    CHECK(near > 0.0);
    CHECK(far > near);
    // stationary-in-space regime: Var(u(t,x)-u(t,y)) ~ |x-y|/2 for small lags
    CHECK(near == doctest::Approx(0.005).epsilon(0.05));
}
