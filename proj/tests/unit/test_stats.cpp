#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "heatprobe/error.hpp"
#include "heatprobe/stats.hpp"

using namespace heatprobe;
using namespace heatprobe::stats;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> out(n);
    for (auto& v : out) v = z(gen);
    return out;
}

}  // namespace

TEST_CASE("kde: standard normal peak, mass and precondition errors") {
    const auto s = normals(100000, 1);
    const auto kde = kde_density(s, 1);
    CHECK(std::abs(kde.peak() - 1.0 / std::sqrt(2.0 * std::numbers::pi)) <= 0.01);
    CHECK(kde.mass >= 0.99);
    CHECK(kde.mass <= 1.01);
    for (double v : kde.values) CHECK(v >= 0.0);

    CHECK_THROWS_AS(kde_density(std::vector<double>{}, 1), ContractError);
    CHECK_THROWS_AS(kde_density(normals(499, 2), 1), ContractError);
    CHECK_THROWS_AS(kde_density(normals(4000, 2), 4), ContractError);
    // a grid missing most of the mass is rejected
    EvalGrid narrow{{-0.5}, {0.5}, {101}};
    CHECK_THROWS_AS(kde_density(s, 1, narrow), ContractError);
}

TEST_CASE("kde: silverman rule and a 2d product normal") {
    const auto s = normals(20000, 3);
    std::vector<double> pts(2 * 10000);
    for (std::size_t i = 0; i < 10000; ++i) {
        pts[2 * i] = s[i];
        pts[2 * i + 1] = 2.0 * s[10000 + i];
    }
    const auto h = silverman_bandwidth(pts, 2);
    double m0 = 0, m1 = 0, q0 = 0, q1 = 0;
    for (std::size_t i = 0; i < 10000; ++i) {
        m0 += pts[2 * i];
        m1 += pts[2 * i + 1];
    }
    m0 /= 10000;
    m1 /= 10000;
    for (std::size_t i = 0; i < 10000; ++i) {
        q0 += (pts[2 * i] - m0) * (pts[2 * i] - m0);
        q1 += (pts[2 * i + 1] - m1) * (pts[2 * i + 1] - m1);
    }
    const double f = std::pow(4.0 / (4.0 * 10000), 1.0 / 6.0);
    CHECK(h[0] == doctest::Approx(std::sqrt(q0 / 9999) * f).epsilon(1e-12));
    CHECK(h[1] == doctest::Approx(std::sqrt(q1 / 9999) * f).epsilon(1e-12));

    const auto kde = kde_density(pts, 2);
    const double exact_peak = 1.0 / (2.0 * std::numbers::pi * 2.0);
    CHECK(std::abs(kde.peak() / exact_peak - 1.0) <= 0.08);
    CHECK(kde.mass == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("kde: union of two halves is the mixture of the halves") {
    const auto a = normals(600, 4);
    auto b = normals(700, 5, 1.5);
    for (auto& v : b) v += 1.0;
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    const std::vector<double> h{0.3};
    EvalGrid g{{-9.0}, {11.0}, {301}};
    const auto ka = kde_density(a, 1, g, h);
    const auto kb = kde_density(b, 1, g, h);
    const auto ku = kde_density(all, 1, g, h, 3);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double mix = (600.0 * ka.values[k] + 700.0 * kb.values[k]) / 1300.0;
        CHECK(std::abs(ku.values[k] - mix) <= 1e-13 * std::max(ku.peak(), 1e-300));
    }
}

TEST_CASE("kde: evaluation is independent of the thread count") {
    const auto s = normals(3000, 6);
    const auto one = kde_density(s, 1, 1);
    const auto four = kde_density(s, 1, 4);
    CHECK(one.values == four.values);
}

TEST_CASE("lower envelope fit against a brute-force scan") {
    // exact N(0, v) density tabulated on a grid, posing as a KDE
    const double v = 0.3, t = 0.5;
    KdeEstimate k;
    k.dim = 1;
    k.grid = EvalGrid{{-4.0}, {4.0}, {801}};
    for (std::size_t i = 0; i < k.grid.size(); ++i) {
        double z;
        k.grid.point(i, {&z, 1});
        k.values.push_back(std::exp(-z * z / (2 * v)) / std::sqrt(2 * std::numbers::pi * v));
    }
    const double c = fit_lower_envelope(k, t, 1e-3);
    CHECK(c > 0.0);
    const auto holds = [&](double cc) {
        for (std::size_t i = 0; i < k.grid.size(); ++i) {
            if (k.values[i] < 1e-3 * k.peak()) continue;
            double z;
            k.grid.point(i, {&z, 1});
            if (cc * std::pow(t, -0.25) * std::exp(-z * z / (cc * std::sqrt(t))) > k.values[i])
                return false;
        }
        return true;
    };
    CHECK(holds(c));
    CHECK_FALSE(holds(c * (1 + 1e-6)));
    // scan: every c on a fine ladder below the fit holds, every c above fails
    for (double cc = 1e-3; cc < 10.0; cc *= 1.01) CHECK(holds(cc) == (cc <= c));
}

TEST_CASE("wilson interval against its defining quadratic") {
    const double z = kWilsonZ95;
    for (std::size_t n : {1u, 10u, 37u, 1000u})
        for (std::size_t k = 0; k <= n; k += std::max<std::size_t>(1, n / 7)) {
            const auto ci = wilson_interval(k, n);
            const double p = double(k) / n;
            CHECK(ci.lo >= 0.0);
            CHECK(ci.hi <= 1.0);
            CHECK(ci.lo <= p);
            CHECK(ci.hi >= p);
            // endpoints solve (p - q)^2 = z^2 q (1 - q) / n
            const auto g = [&](double q) { return (p - q) * (p - q) - z * z * q * (1 - q) / n; };
            if (k > 0) CHECK(std::abs(g(ci.lo)) <= 1e-12);
            if (k < n) CHECK(std::abs(g(ci.hi)) <= 1e-12);
        }
    const auto c = wilson_interval(5, 10);
    CHECK(c.lo == doctest::Approx(0.2366).epsilon(1e-3));
    CHECK(c.hi == doctest::Approx(0.7634).epsilon(1e-3));
    CHECK_THROWS_AS(wilson_interval(1, 0), ContractError);
}

TEST_CASE("hit probability: brute-force oracle, trivial targets, nesting, threads") {
    const auto model = make_bounded_smooth(1);
    const auto grid = GridSpec::with_ratio(16, 0.5);
    RngSpec rng;
    rng.master_seed = 77;
    const HitWindow w{0.25, 0.5, 0.25, 0.75};
    const std::size_t n = 200;

    // sample spread over the window from stored paths
    std::vector<Trajectory> paths;
    for (std::size_t p = 0; p < n; ++p) paths.push_back(simulate(grid, *model, rng, p));
    double s2 = 0.0, cnt = 0.0;
    for (const auto& tr : paths)
        for (int k = grid.step_of(0.25); k <= grid.step_of(0.5); ++k)
            for (int m = 4; m <= 12; ++m) {
                s2 += tr.at(k, m, 0) * tr.at(k, m, 0);
                cnt += 1;
            }
    const double sd = std::sqrt(s2 / cnt);

    std::vector<Target> targets{Target::box({-10 * sd}, {10 * sd}),
                                Target::ball({20 * sd}, 0.1 * sd),
                                Target::ball({0.0}, 0.02),
                                Target::ball({0.0}, 0.1),
                                Target::ball({0.05}, 0.3),
                                Target::box({-0.1}, {0.2})};
    const auto rep = hit_probability(grid, *model, rng, n, w, targets);
    CHECK(rep[0].estimate == 1.0);
    CHECK(rep[1].estimate == 0.0);
    CHECK(rep[1].ci.lo == 0.0);
    CHECK(rep[1].zero_hit_upper <= 3.0 / n);
    // nesting ball(0, .02) in ball(0, .1) in ball(.05, .3), box(-.1, .2) in ball(.05, .3)
    CHECK(rep[2].hits <= rep[3].hits);
    CHECK(rep[3].hits <= rep[4].hits);
    CHECK(rep[5].hits <= rep[4].hits);

    // direct scan of the stored paths
    for (std::size_t k = 0; k < targets.size(); ++k) {
        std::size_t hits = 0;
        for (const auto& tr : paths) {
            bool hit = false;
            for (int s = grid.step_of(0.25); s <= grid.step_of(0.5) && !hit; ++s)
                for (int m = 4; m <= 12 && !hit; ++m) {
                    const double u = tr.at(s, m, 0);
                    hit = targets[k].contains(&u);
                }
            hits += hit;
        }
        CHECK(rep[k].hits == hits);
    }
    CHECK(rep[2].noise_floor > 0.0);
    CHECK(rep[2].resolution_warning == (0.02 < rep[2].noise_floor));

    const auto again = hit_probability(grid, *model, rng, n, w, targets, 3);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        CHECK(again[k].hits == rep[k].hits);
        CHECK(again[k].noise_floor == rep[k].noise_floor);
    }

    CHECK_THROWS_AS(hit_probability(grid, *model, rng, n, HitWindow{0.0, 0.5, 0.25, 0.75}, targets),
                    ContractError);
    CHECK_THROWS_AS(hit_probability(grid, *model, rng, n, HitWindow{0.25, 0.5, 0.0, 0.75}, targets),
                    ContractError);
    const std::vector<Target> wrong{Target::ball({0.0, 0.0}, 1.0)};
    CHECK_THROWS_AS(hit_probability(grid, *model, rng, n, w, wrong), ContractError);
}

TEST_CASE("hit probability: random nested targets are ordered on one ensemble") {
    const auto model = make_linear_test(2);
    const auto grid = GridSpec::with_ratio(8, 0.25);
    RngSpec rng;
    rng.master_seed = 3;
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-0.5, 0.5), r(0.01, 0.6);
    std::vector<Target> targets;
    for (int k = 0; k < 25; ++k) {
        const std::vector<double> c{u(gen), u(gen)};
        const double inner = r(gen);
        const double shift = 0.5 * r(gen);
        targets.push_back(Target::ball(c, inner));
        // a ball containing the first: centre moved by `shift`, radius grown by more
        targets.push_back(Target::ball({c[0] + shift, c[1]}, inner + shift * 1.0001));
    }
    const auto rep = hit_probability(grid, *model, rng, 150, HitWindow{0.1, 0.25, 0.2, 0.8}, targets);
    for (std::size_t k = 0; k < targets.size(); k += 2) CHECK(rep[k].hits <= rep[k + 1].hits);
}

TEST_CASE("level sets: trivial levels, exact membership and derived sets") {
    const auto model = make_bounded_smooth(2);
    const auto grid = GridSpec::with_ratio(12, 0.2);
    RngSpec rng;
    rng.master_seed = 5;
    const auto tr = simulate(grid, *model, rng, 0);
    const std::vector<double> z{0.1, -0.05};

    const auto none = level_set(tr, std::vector<double>{1e3, 0.0}, 1.0);
    CHECK(none.nodes.empty());
    CHECK(none.time_projection.empty());
    const auto all = level_set(tr, z, std::numeric_limits<double>::infinity());
    CHECK(all.nodes.size() == static_cast<std::size_t>((grid.nt() + 1) * grid.sites()));

    const double tol = default_level_tolerance(tr);
    CHECK(tol == doctest::Approx(2.0 * cell_increment_rms(tr)));
    LevelSetOptions opt;
    opt.window = {0.05, 0.2, 0.1, 0.9};
    opt.section_step = grid.nt() / 2;
    opt.section_site = 6;
    const auto ls = level_set(tr, z, tol, opt);
    // membership re-checked by hand, and no node outside the list qualifies
    std::set<std::pair<int, int>> in(ls.nodes.begin(), ls.nodes.end());
    std::set<int> ts, xs;
    for (int n = 0; n <= grid.nt(); ++n)
        for (int m = 0; m <= grid.nx; ++m) {
            double d2 = 0.0;
            for (int i = 0; i < 2; ++i) d2 += std::pow(tr.at(n, m, i) - z[i], 2);
            const bool inside_window = grid.t(n) >= 0.05 - 1e-12 && grid.t(n) <= 0.2 + 1e-12 &&
                                       grid.x(m) >= 0.1 - 1e-12 && grid.x(m) <= 0.9 + 1e-12;
            const bool member = inside_window && std::sqrt(d2) <= tol;
            CHECK(member == (in.count({n, m}) == 1));
            if (member) {
                ts.insert(n);
                xs.insert(m);
            }
        }
    CHECK(std::vector<int>(ts.begin(), ts.end()) == ls.time_projection);
    CHECK(std::vector<int>(xs.begin(), xs.end()) == ls.space_projection);
    for (int n : ls.fixed_x_section) CHECK(in.count({n, 6}) == 1);
    for (const auto& [n, m] : ls.nodes)
        if (m == 6)
            CHECK(std::find(ls.fixed_x_section.begin(), ls.fixed_x_section.end(), n) !=
                  ls.fixed_x_section.end());
    for (int m : ls.fixed_t_section) CHECK(in_level_set(tr, opt.section_step, m, z, tol));
    CHECK_THROWS_AS(level_set(tr, z, -1.0), ContractError);
}

TEST_CASE("prediction table obeys dim + codim = ambient in covered regimes") {
    const RandomSet all[] = {RandomSet::range_tx,   RandomSet::range_x,    RandomSet::range_t,
                             RandomSet::levelset_L, RandomSet::levelset_T, RandomSet::levelset_X,
                             RandomSet::levelset_Lx, RandomSet::levelset_Lt};
    for (RandomSet w : all) {
        CHECK(parse_random_set(to_string(w)) == w);
        for (int d = 1; d <= 8; ++d) {
            const auto p = predict(w, d);
            if (p.covered) CHECK(p.dimension + p.codimension == doctest::Approx(p.ambient));
        }
    }
    CHECK(predict(RandomSet::levelset_Lt, 1).dimension == 0.5);
    CHECK(predict(RandomSet::levelset_Lx, 1).dimension == 0.75);
    CHECK(predict(RandomSet::range_x, 3).dimension == 2.0);
    CHECK(predict(RandomSet::range_x, 3).codimension == 1.0);
    CHECK(predict(RandomSet::levelset_T, 3).dimension == 0.75);
    CHECK(predict(RandomSet::levelset_X, 5).dimension == 0.5);
    CHECK(predict(RandomSet::range_tx, 7).dimension == 6.0);
    CHECK_FALSE(predict(RandomSet::levelset_Lt, 2).covered);
    CHECK_FALSE(predict(RandomSet::range_x, 2).covered);
    CHECK_THROWS_AS(parse_random_set("range"), ConfigError);
    CHECK(parse_sandwich_variant("fixed_x") == SandwichVariant::fixed_x);
    CHECK(parse_collapse_mode("mixed") == CollapseMode::mixed);
}

TEST_CASE("dimension report: pooling matches a hand computation; empty and uncovered sets") {
    const auto model = make_linear_test(3);
    const auto grid = GridSpec::with_ratio(32, 0.25);
    RngSpec rng;
    rng.master_seed = 21;
    DimensionOptions opt;
    opt.n_paths = 3;
    opt.scales = dyadic_scales(1, 7, 0.5);
    opt.direct_slice = true;
    opt.direct_nx = 4096;
    const auto rep = dimension_report(grid, *model, rng, RandomSet::range_x, opt);
    REQUIRE(rep.fitted);
    CHECK(rep.paths_used == 3);
    std::vector<double> mean(opt.scales.size(), 0.0);
    for (std::uint64_t p = 0; p < 3; ++p) {
        const auto s = sample_additive_slice(4096, Boundary::neumann, grid.dt * 32 * 32, 0.25,
                                             *model, rng, p);
        potential::PointSet pts;
        pts.dim = 3;
        pts.coords.assign(s.values.begin() + 3, s.values.end() - 3);  // interior sites
        const auto c = potential::box_counts(pts, potential::Metric::euclidean, opt.scales);
        for (std::size_t k = 0; k < c.size(); ++k) mean[k] += c[k] / 3.0;
    }
    for (std::size_t k = 0; k < mean.size(); ++k)
        CHECK(rep.box.counts[k] == doctest::Approx(mean[k]).epsilon(1e-12));
    CHECK(rep.identity_sum == doctest::Approx(rep.measured + 1.0));

    // a level far outside the range is never attained
    const auto one = make_linear_test(1);
    DimensionOptions far = opt;
    far.n_paths = 1;
    far.z = {50.0};
    const auto empty = dimension_report(grid, *one, rng, RandomSet::levelset_Lt, far);
    CHECK_FALSE(empty.fitted);
    CHECK(empty.note == "empty on this path");
    CHECK(empty.paths_empty == 1);

    CHECK_THROWS_AS(dimension_report(grid, *one, rng, RandomSet::range_x, opt), ContractError);
    DimensionOptions few = opt;
    few.scales = dyadic_scales(1, 7, 1.0);
    CHECK_THROWS_AS(dimension_report(grid, *model, rng, RandomSet::range_x, few), ContractError);
    DimensionOptions stepped = opt;
    stepped.direct_slice = true;
    CHECK_THROWS_AS(
        dimension_report(grid, *make_bounded_smooth(3), rng, RandomSet::range_x, stepped),
        ContractError);
}

TEST_CASE("dimension report: stepped level sets agree with level_set on stored paths") {
    const auto model = make_bounded_smooth(3);
    const auto grid = GridSpec::with_ratio(32, 0.25);
    RngSpec rng;
    rng.master_seed = 8;
    DimensionOptions opt;
    opt.n_paths = 4;
    opt.scales = dyadic_scales(1, 8);
    opt.min_points = 1;
    opt.tolerance_factor = 3.0;
    const auto rep = dimension_report(grid, *model, rng, RandomSet::levelset_T, opt);
    // rebuild T from the stored paths with the same window and tolerance rule
    std::vector<double> mean(opt.scales.size(), 0.0);
    std::size_t used = 0;
    for (std::uint64_t p = 0; p < 4; ++p) {
        const auto tr = simulate(grid, *model, rng, p);
        const int n0 = grid.step_of(grid.T / 4);
        double s2 = 0.0, c = 0.0;
        for (int n = n0; n <= grid.nt(); ++n)
            for (int m = 1; m + 1 < grid.nx; ++m) {
                for (int i = 0; i < 3; ++i) s2 += std::pow(tr.at(n, m + 1, i) - tr.at(n, m, i), 2);
                c += 1;
            }
        LevelSetOptions lo;
        lo.window = {grid.T / 4, grid.T, grid.dx(), 1.0 - grid.dx()};
        const auto ls = level_set(tr, std::vector<double>(3, 0.0), 3.0 * std::sqrt(s2 / c), lo);
        if (ls.time_projection.empty()) continue;
        ++used;
        potential::PointSet pts;
        pts.dim = 1;
        for (int n : ls.time_projection) pts.coords.push_back(grid.t(n));
        const auto cnt = potential::box_counts(pts, potential::Metric::euclidean, opt.scales);
        for (std::size_t k = 0; k < cnt.size(); ++k) mean[k] += cnt[k];
    }
    CHECK(rep.paths_used == used);
    if (used > 0 && rep.fitted)
        for (std::size_t k = 0; k < mean.size(); ++k)
            CHECK(rep.box.counts[k] == doctest::Approx(mean[k] / used).epsilon(1e-12));
}

TEST_CASE("sandwich: d = 1 indices are negative, so capacity is 1 and covers are infinite") {
    const auto [lo, hi] = sandwich_indices(SandwichVariant::space_time, 1, 0.05);
    CHECK(lo == doctest::Approx(-4.95));
    CHECK(hi == doctest::Approx(-5.05));
    CHECK(sandwich_indices(SandwichVariant::fixed_t, 3, 0.05).first == 1.0);
    CHECK(sandwich_indices(SandwichVariant::fixed_t, 3, 0.05).second == doctest::Approx(0.95));
    CHECK(sandwich_indices(SandwichVariant::fixed_x, 5, 0.05).first == doctest::Approx(1.05));

    const auto model = make_bounded_smooth(1);
    const auto grid = GridSpec::with_ratio(16, 0.5);
    RngSpec rng;
    rng.master_seed = 4;
    SandwichOptions opt;
    opt.n_paths = 100;
    const auto rep = sandwich_experiment(grid, *model, rng, opt);
    REQUIRE(rep.rows.size() == 4);
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
        CHECK(rep.rows[k].capacity == 1.0);
        CHECK(rep.rows[k].cover_infinite);
        if (k > 0) CHECK(rep.rows[k].hit.hits >= rep.rows[k - 1].hit.hits);
    }
    CHECK(rep.capacity_slope == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isnan(rep.cover_slope));
}

TEST_CASE("sandwich: fixed-t capacity and cover slopes follow the indices for d = 3") {
    const auto model = make_linear_test(3);
    const auto grid = GridSpec::with_ratio(16, 0.25);
    RngSpec rng;
    SandwichOptions opt;
    opt.variant = SandwichVariant::fixed_t;
    opt.n_paths = 20;
    opt.radii = {0.2, 0.4, 0.8};
    opt.window = {0.25, 0.25, 0.1, 0.9};
    const auto rep = sandwich_experiment(grid, *model, rng, opt);
    // Cap_1 and the one-ball cover scale exactly with the mesh
    CHECK(rep.capacity_slope == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rep.cover_slope == doctest::Approx(0.95).epsilon(1e-6));
}

TEST_CASE("increment collapse: contracts and the linear ratio") {
    const auto model = make_linear_test(1);
    const auto grid = GridSpec::with_ratio(64, 0.5);
    RngSpec rng;
    CollapseOptions opt;
    opt.t = 0.5;
    opt.x = 0.25;
    opt.n_samples = 600;
    opt.offsets = {1.0 / 64, 1.0 / 16, 0.125};
    CHECK_THROWS_AS(increment_collapse(grid, *model, rng, opt), ContractError);  // < 1.5 decades
    opt.offsets = {0.0, 0.5};
    CHECK_THROWS_AS(increment_collapse(grid, *model, rng, opt), ContractError);
    opt.offsets = {1.0 / 64, 1.0 / 16, 0.125, 0.5};
    const auto rep = increment_collapse(grid, *model, rng, opt);
    CHECK(rep.span_decades >= 1.5);
    MESSAGE("linear collapse ratio " << rep.ratio);
    CHECK(rep.ratio <= 1.3);
    CHECK(rep.collapsed);
}

TEST_CASE("density bound check: linear case lower envelope and tail") {
    const auto model = make_linear_test(1);
    const auto grid = GridSpec::with_ratio(16, 0.5);
    RngSpec rng;
    DensityBoundOptions opt;
    opt.n_samples = 2000;
    opt.t_list = {0.25, 0.5};
    opt.x_list = {0.5};
    const auto rep = density_bound_check(grid, *model, rng, opt);
    CHECK(rep.sites.size() == 2);
    CHECK(rep.c_lower > 0.0);
    CHECK(rep.lower_ok);
    for (const auto& s : rep.sites) CHECK(s.tail_ratio < 1e-3);
    CHECK_THROWS_AS(density_bound_check(grid, *make_model("zero", 1), rng, opt), ContractError);
}
