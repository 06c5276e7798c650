#include <doctest.h>

#include <cmath>
#include <vector>

#include "heatprobe/error.hpp"
#include "heatprobe/kernel.hpp"
#include "heatprobe/solver.hpp"

using namespace heatprobe;

TEST_CASE("grid construction and stability") {
    const auto g = GridSpec::with_ratio(64, 0.3);
    CHECK(g.dt <= 0.25 / (64.0 * 64.0));
    CHECK(std::abs(g.nt() * g.dt - 0.3) <= 1e-12);
    CHECK(g.cell(0) == doctest::Approx(0.5 / 64));
    CHECK(g.cell(5) == doctest::Approx(1.0 / 64));
    GridSpec bad{16, 0.1, 0.6 / 256};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    GridSpec uneven{16, 0.1, 0.3 / 256 * 1.0001};
    CHECK_THROWS_AS(uneven.validate(), ConfigError);
    CHECK_THROWS_AS(GridSpec::with_ratio(16, 0.1, 0.7), ConfigError);
}

TEST_CASE("coefficient model audits") {
    for (int d = 1; d <= 3; ++d) {
        const auto bs = make_bounded_smooth(d);
        const auto a = audit_model(*bs, 5);
        CHECK(a.ellipticity_ok);
        CHECK(a.lipschitz_ok);
        CHECK(a.min_sq_norm >= 0.05);
    }
    const auto lin = make_linear_test(2);
    CHECK(audit_model(*lin, 1).min_sq_norm == doctest::Approx(1.0));
    CHECK_THROWS_AS(make_model("nope", 1), ConfigError);
}

TEST_CASE("analytic jacobians match central differences") {
    const auto bs = make_bounded_smooth(3);
    struct Fd : CoefficientModel {
        const CoefficientModel& base;
        explicit Fd(const CoefficientModel& b) : CoefficientModel(b.dim()), base(b) {}
        void sigma(std::span<const double> u, std::span<double> o) const override { base.sigma(u, o); }
        void drift(std::span<const double> u, std::span<double> o) const override { base.drift(u, o); }
    } fd(*bs);
    const std::vector<double> u{0.3, -1.2, 2.0};
    std::vector<double> a(27), b(27), c(9), e(9);
    bs->sigma_jacobian(u, a);
    fd.sigma_jacobian(u, b);
    bs->drift_jacobian(u, c);
    fd.drift_jacobian(u, e);
    for (int k = 0; k < 27; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-8));
    for (int k = 0; k < 9; ++k) CHECK(c[k] == doctest::Approx(e[k]).epsilon(1e-8));
}

TEST_CASE("zero dynamics keep zero data") {
    const auto g = GridSpec::with_ratio(16, 0.05);
    const auto tr = simulate(g, *make_model("zero", 2), {}, 0);
    for (double v : tr.values) CHECK(v == 0.0);
}

TEST_CASE("flat drift gives u = t") {
    const auto g = GridSpec::with_ratio(16, 0.05);
    const auto m = make_constant(2, std::vector<double>(4, 0.0), {1.0, 1.0});
    const auto tr = simulate(g, *m, {}, 0);
    for (int n = 0; n <= g.nt(); n += 7)
        for (int x = 0; x <= g.nx; ++x)
            for (int i = 0; i < 2; ++i) CHECK(std::abs(tr.at(n, x, i) - g.t(n)) <= 1e-12);
}

TEST_CASE("initial slice is zero, dirichlet walls stay zero, values finite") {
    GridSpec g = GridSpec::with_ratio(16, 0.05, 0.25, Boundary::dirichlet);
    const auto tr = simulate(g, *make_bounded_smooth(2), {3}, 1, true);
    for (double v : tr.slice(0)) CHECK(v == 0.0);
    for (int n = 0; n <= g.nt(); ++n) {
        for (int i = 0; i < 2; ++i) {
            CHECK(tr.at(n, 0, i) == 0.0);
            CHECK(tr.at(n, g.nx, i) == 0.0);
        }
    }
    for (double v : tr.values) CHECK(std::isfinite(v));
    CHECK(tr.noise.size() == std::size_t(g.nt()) * g.sites() * 2);
}

TEST_CASE("replaying the retained noise reproduces the path") {
    const auto g = GridSpec::with_ratio(16, 0.05);
    const auto model = make_bounded_smooth(2);
    const auto a = simulate(g, *model, {11}, 4, true);
    const auto b = simulate_with_noise(g, *model, a.noise, 4);
    CHECK(a.values == b.values);
}

TEST_CASE("blow-up is reported with its location") {
    const auto g = GridSpec::with_ratio(8, 0.05);
    const auto m = make_constant(1, {0.0}, {1e12});
    try {
        simulate(g, *m, {}, 7);
        FAIL("expected blow-up");
    } catch (const BlowUpError& e) {
        CHECK(e.step == 1);
        CHECK(e.path == 7);
    }
}

TEST_CASE("single-path ensemble reproduces simulate; thread count is irrelevant") {
    const auto g = GridSpec::with_ratio(16, 0.05);
    const auto model = make_bounded_smooth(2);
    const std::vector<Observable> obs{Observable::point(g.nt(), 8, 1),
                                      Observable::increment(g.nt(), 8, g.nt() / 2, 3, 0)};
    const auto one = ensemble_run(g, *model, {5}, 1, obs);
    const auto tr = simulate(g, *model, {5}, 0);
    CHECK(one.samples[0] == tr.at(g.nt(), 8, 1));
    CHECK(one.samples[1] == tr.at(g.nt(), 8, 0) - tr.at(g.nt() / 2, 3, 0));

    const auto r1 = ensemble_run(g, *model, {5}, 40, obs, 1);
    const auto r4 = ensemble_run(g, *model, {5}, 40, obs, 4);
    CHECK(r1.samples == r4.samples);
    CHECK(r1.summaries[0].mean == r4.summaries[0].mean);
    CHECK(r1.summaries[1].variance == r4.summaries[1].variance);
}

TEST_CASE("linear case: mean zero, gaussian, variance matches the kernel integral") {
    const double T = 0.3;
    const auto g = GridSpec::with_ratio(16, T);
    const auto model = make_linear_test(1);
    const auto res = ensemble_run(g, *model, {2024}, 5000, {Observable::point(g.nt(), 8)}, 2);
    const auto& s = res.summaries[0];
    CHECK(std::abs(s.mean) <= 3 * s.stderr_mean);
    CHECK(std::abs(s.kurtosis - 3.0) <= 3 * s.stderr_kurtosis);
    const double oracle = kernel::variance_integral({}, T, 0.5);
    // three standard errors plus a 10% grid-refinement margin
    CHECK(std::abs(s.variance - oracle) <= 3 * s.stderr_variance + 0.1 * oracle);
}

TEST_CASE("second moments are stable under grid refinement") {
    const auto model = make_bounded_smooth(1);
    double maxima[2];
    for (int r = 0; r < 2; ++r) {
        const auto g = GridSpec::with_ratio(16 << r, 0.1);
        std::vector<Observable> obs;
        for (int m = 0; m <= g.nx; m += 1 << r) obs.push_back(Observable::point(g.nt(), m));
        const auto res = ensemble_run(g, *model, {99}, 3000, obs, 2);
        double best = 0.0;
        for (std::size_t k = 0; k < obs.size(); ++k) {
            const auto col = res.column(k);
            double sq = 0.0;
            for (double v : col) sq += v * v;
            best = std::max(best, sq / col.size());
        }
        maxima[r] = best;
    }
    CHECK(std::abs(maxima[1] - maxima[0]) <= 0.1 * maxima[0]);
}

TEST_CASE("linear holder slopes") {
    const auto g = GridSpec::with_ratio(64, 0.25);
    const auto model = make_linear_test(1);
    const std::vector<double> time_lags{1.0 / 1024, 1.0 / 512, 1.0 / 256, 1.0 / 128, 1.0 / 64};
    const auto ts = holder_run(g, *model, {8}, 200, 2.0, LagMode::time, 0.25, 0.5, time_lags, 0, 2);
    CHECK(ts.fit.exponent == doctest::Approx(0.5).epsilon(0.2));
    const std::vector<double> space_lags{2.0 / 64, 3.0 / 64, 4.0 / 64, 6.0 / 64, 8.0 / 64};
    const auto xs = holder_run(g, *model, {8}, 200, 2.0, LagMode::space, 0.25, 0.5, space_lags, 0, 2);
    CHECK(xs.fit.exponent == doctest::Approx(1.0).epsilon(0.15));
    CHECK_THROWS_AS(holder_run(g, *model, {8}, 400, 2.0, LagMode::time, 0.25, 0.5,
                               std::vector<double>{1e-9, 0.01, 0.02}, 0, 1),
                    ContractError);
    CHECK_THROWS_AS(holder_run(g, *model, {8}, 400, 2.0, LagMode::time, 0.25, 0.5,
                               std::vector<double>{0.01, 0.02}, 0, 1),
                    FitError);
}

TEST_CASE("moment_scaling on stored trajectories agrees with the streaming run") {
    const auto g = GridSpec::with_ratio(16, 0.1);
    const auto model = make_linear_test(1);
    std::vector<Trajectory> paths;
    for (int p = 0; p < 100; ++p) paths.push_back(simulate(g, *model, {1}, p));
    const std::vector<double> lags{1.0 / 16, 2.0 / 16, 4.0 / 16};
    const auto a = moment_scaling(paths, 2.0, LagMode::space, 0.1, 0.25, lags);
    const auto b = holder_run(g, *model, {1}, 100, 2.0, LagMode::space, 0.1, 0.25, lags);
    CHECK(a.moments == b.moments);
    CHECK(a.fit.exponent == b.fit.exponent);
    CHECK_THROWS_AS(moment_scaling(std::span(paths).first(50), 2.0, LagMode::space, 0.1, 0.25, lags),
                    ContractError);
}

namespace {

// Covariance of the stepped scheme from the recursion C <- A C A^T + dt W^-1.
std::vector<double> stepped_covariance(int nx, Boundary bc, double ratio, int steps) {
    const int n = nx + 1;
    const double dt = ratio / (double(nx) * nx);
    std::vector<double> A(n * n, 0.0), C(n * n, 0.0), tmp(n * n);
    for (int m = 0; m < n; ++m) {
        if (bc == Boundary::dirichlet && (m == 0 || m == nx)) continue;
        const int l = m == 0 ? 1 : m - 1, r = m == nx ? nx - 1 : m + 1;
        A[m * n + m] += 1.0 - 2.0 * ratio;
        if (l != 0 || bc == Boundary::neumann) A[m * n + l] += ratio;
        if (r != nx || bc == Boundary::neumann) A[m * n + r] += ratio;
    }
    for (int s = 0; s < steps; ++s) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double v = 0.0;
                for (int k = 0; k < n; ++k) v += A[i * n + k] * C[k * n + j];
                tmp[i * n + j] = v;
            }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double v = 0.0;
                for (int k = 0; k < n; ++k) v += tmp[i * n + k] * A[j * n + k];
                C[i * n + j] = v;
            }
        for (int m = 0; m < n; ++m) {
            if (bc == Boundary::dirichlet && (m == 0 || m == nx)) continue;
            C[m * n + m] += dt * ((m == 0 || m == nx) ? 2.0 * nx : double(nx));
        }
    }
    return C;
}

}  // namespace

TEST_CASE("direct additive slice has the covariance of the stepped scheme") {
    const auto model = make_linear_test(1);
    for (Boundary bc : {Boundary::neumann, Boundary::dirichlet})
        for (double ratio : {0.25, 0.4})
            for (int steps : {1, 7, 60}) {
                const int nx = 12, n = nx + 1;
                std::vector<double> M(n * n);  // column k = response to normal k
                for (int k = 0; k < n; ++k) {
                    std::vector<double> e(n, 0.0);
                    e[k] = 1.0;
                    const auto s = additive_slice_from_normals(nx, bc, ratio, steps, *model, e);
                    for (int m = 0; m < n; ++m) M[m * n + k] = s.values[m];
                }
                const auto C = stepped_covariance(nx, bc, ratio, steps);
                double worst = 0.0, scale = 0.0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        double v = 0.0;
                        for (int k = 0; k < n; ++k) v += M[i * n + k] * M[j * n + k];
                        worst = std::max(worst, std::abs(v - C[i * n + j]));
                        scale = std::max(scale, std::abs(C[i * n + j]));
                    }
                CHECK(worst <= 1e-12 * std::max(scale, 1e-300) + 1e-300);
            }
}

TEST_CASE("direct slice: sigma mixing, contracts and agreement with simulated paths") {
    const std::vector<double> s0{2.0, 0.0, 1.0, 1.0};
    const auto mixed = make_constant(2, s0, {0.0, 0.0});
    const auto unit = make_linear_test(2);
    std::vector<double> z(9 * 2);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = std::sin(1.0 + k);
    const auto a = additive_slice_from_normals(8, Boundary::neumann, 0.25, 30, *mixed, z);
    const auto b = additive_slice_from_normals(8, Boundary::neumann, 0.25, 30, *unit, z);
    for (int m = 0; m <= 8; ++m) {
        CHECK(a.values[m * 2] == doctest::Approx(2.0 * b.values[m * 2]));
        CHECK(a.values[m * 2 + 1] == doctest::Approx(b.values[m * 2] + b.values[m * 2 + 1]));
    }
    CHECK_THROWS_AS(additive_slice_from_normals(8, Boundary::neumann, 0.25, 30,
                                                *make_bounded_smooth(2), z),
                    ContractError);
    CHECK_THROWS_AS(additive_slice_from_normals(8, Boundary::neumann, 0.25, 30, *unit,
                                                std::vector<double>(5)),
                    ContractError);

    // variance at a site: direct draws against stepped paths
    const auto lin = make_linear_test(1);
    const auto grid = GridSpec::with_ratio(16, 0.0625);  // exactly 64 steps
    RngSpec rng;
    rng.master_seed = 11;
    const int n_paths = 4000;
    double direct = 0.0, stepped = 0.0;
    const auto ens = ensemble_run(grid, *lin, rng, n_paths, {Observable::point(grid.nt(), 5)});
    for (int p = 0; p < n_paths; ++p) {
        const auto s = sample_additive_slice(16, Boundary::neumann, 0.25, 0.0625, *lin, rng, p);
        CHECK(s.steps == grid.nt());
        direct += s.values[5] * s.values[5];
        stepped += ens.samples[p] * ens.samples[p];
    }
    // two independent estimates of one variance, each with rel. sd sqrt(2 / n)
    CHECK(std::abs(direct / stepped - 1.0) <= 4.0 * std::sqrt(4.0 / n_paths));
}
