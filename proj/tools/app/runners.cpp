#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "app.hpp"
#include "checks.hpp"
#include "fields.hpp"
#include "heatprobe/kernel.hpp"
#include "heatprobe/malliavin.hpp"
#include "heatprobe/potential.hpp"
#include "heatprobe/solver.hpp"
#include "heatprobe/stats.hpp"

namespace heatprobe::app {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

Claim make_claim(std::string id, std::string ref, double measured, double predicted, std::string tol,
                 Verdict verdict, std::string detail = "") {
    Claim c;
    c.id = std::move(id);
    c.paper_ref = std::move(ref);
    c.measured = measured;
    c.predicted = predicted;
    c.tolerance = std::move(tol);
    c.verdict = verdict;
    c.detail = std::move(detail);
    return c;
}

Verdict verdict_of(bool ok) { return ok ? Verdict::pass : Verdict::fail; }

Claim within(std::string id, std::string ref, double measured, double lo, double hi, double predicted) {
    const bool ok = measured >= lo && measured <= hi;
    return make_claim(std::move(id), std::move(ref), measured, predicted,
                      "[" + num(lo) + ", " + num(hi) + "]", verdict_of(ok));
}

Claim at_most(std::string id, std::string ref, double measured, double bound) {
    return make_claim(std::move(id), std::move(ref), measured, kNaN, "<= " + num(bound),
                      verdict_of(measured <= bound));
}

Claim at_least(std::string id, std::string ref, double measured, double bound) {
    return make_claim(std::move(id), std::move(ref), measured, kNaN, ">= " + num(bound),
                      verdict_of(measured >= bound));
}

Claim info(std::string id, std::string ref, double measured, double predicted = kNaN,
           std::string detail = "") {
    return make_claim(std::move(id), std::move(ref), measured, predicted, "", Verdict::informational,
                      std::move(detail));
}

Table check_table(const std::string& name, const std::vector<checks::Row>& rows) {
    Table t{name, {"check", "t", "x", "y", "value", "bound", "pass"}, {}, false};
    for (const auto& r : rows)
        t.add({r.check, r.t, r.x, r.y, r.value, r.bound, std::int64_t{r.pass ? 1 : 0}});
    return t;
}

stats::HitWindow read_window(const Fields& p, const std::string& key, stats::HitWindow def) {
    const Fields w = p.object(key);
    stats::HitWindow out{w.number("t0", def.t0), w.number("t1", def.t1), w.number("x0", def.x0),
                         w.number("x1", def.x1)};
    w.finish();
    return out;
}

void check_window(const Fields& p, const ExperimentConfig& cfg, const stats::HitWindow& w) {
    if (!(w.t0 > 0.0 && w.t0 <= w.t1 && w.t1 <= cfg.grid.T + 1e-12))
        p.fail("window", "needs 0 < t0 <= t1 <= T = " + num(cfg.grid.T));
    if (!(w.x0 > 0.0 && w.x0 <= w.x1 && w.x1 < 1.0)) p.fail("window", "needs 0 < x0 <= x1 < 1");
}

std::vector<double> read_level(const Fields& p, int dim) {
    auto z = p.numbers("z", std::vector<double>(dim, 0.0));
    if (z.size() == 1 && dim > 1) z.assign(dim, z[0]);
    if (z.size() != static_cast<std::size_t>(dim))
        p.fail("z", "needs " + std::to_string(dim) + " components (the model dimension)");
    return z;
}

/// dyadic ladder {k0, k1, step} or an explicit list of scales
std::vector<double> read_scales(const Fields& p, const std::string& key, std::vector<double> def) {
    const Json& v = p.raw(key);
    if (v.is_object()) {
        const Fields d = p.object(key);
        const double k0 = d.number("k0"), k1 = d.number("k1"), step = d.number("step", 1.0);
        d.finish();
        if (!(k1 > k0) || !(step > 0.0)) p.fail(key, "needs k1 > k0 and step > 0");
        return stats::dyadic_scales(k0, k1, step);
    }
    auto s = p.numbers(key, std::move(def));
    for (double e : s)
        if (!(e > 0.0)) p.fail(key, "scales must be positive");
    return s;
}

// ---------------------------------------------------------------- shapes

struct ShapeSpec {
    std::string shape = "interval";
    std::size_t n = 64;
    int dim = 2;
    double radius = 1.0;
    double h = 0.0;
    double t0 = 0.25, t1 = 0.5, x0 = 0.25, x1 = 0.75;
    std::size_t nt = 16;
    std::string file;
    potential::Metric metric = potential::Metric::euclidean;
    double known_dimension = kNaN;
};

ShapeSpec read_shape(const Fields& p) {
    ShapeSpec s;
    s.shape = p.text("shape", "interval", {"interval", "square", "ball", "rectangle", "points"});
    s.n = p.count("n", s.shape == "square" ? 32 : 64, 1);
    s.dim = static_cast<int>(p.integer("dim", 2, 1, 6));
    s.radius = p.number("radius", 1.0);
    s.h = p.number("h", 0.0);
    s.t0 = p.number("t0", s.t0);
    s.t1 = p.number("t1", s.t1);
    s.x0 = p.number("x0", s.x0);
    s.x1 = p.number("x1", s.x1);
    s.nt = p.count("nt", 16, 1);
    s.file = p.text("points", "");
    const std::string metric = p.text("metric", "", {"euclidean", "parabolic"});
    if (s.shape == "points" && s.file.empty()) p.fail("points", "shape 'points' needs a CSV file");
    if (s.shape != "points" && !s.file.empty()) p.fail("points", "only valid with shape 'points'");
    if (!(s.radius > 0.0)) p.fail("radius", "must be positive");
    if (s.shape == "rectangle") {
        s.metric = potential::Metric::parabolic;
        if (!metric.empty() && metric != "parabolic") p.fail("metric", "a time-space rectangle is parabolic");
        if (!(s.t0 < s.t1 && s.x0 < s.x1)) p.fail("shape", "rectangle needs t0 < t1 and x0 < x1");
    } else if (s.shape == "points") {
        s.metric = metric == "parabolic" ? potential::Metric::parabolic : potential::Metric::euclidean;
    } else if (metric == "parabolic") {
        p.fail("metric", "built-in shape '" + s.shape + "' is euclidean");
    }
    if (s.shape == "interval") s.known_dimension = 1;
    if (s.shape == "square") s.known_dimension = 2;
    if (s.shape == "ball") s.known_dimension = s.dim;
    if (s.shape == "rectangle") s.known_dimension = 3;
    return s;
}

potential::PointSet read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open point file");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty point file");
    int dim = 0;
    {
        std::stringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) {
            while (!col.empty() && (col.back() == '\r' || col.back() == ' ')) col.pop_back();
            if (col != "coord_" + std::to_string(dim))
                throw ConfigError(path + ":1: expected header coord_0,..,coord_{k-1}, found '" + col + "'");
            ++dim;
        }
    }
    potential::PointSet pts;
    pts.dim = dim;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ls(line);
        std::string cell;
        int k = 0;
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || !std::isfinite(v))
                throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
            pts.coords.push_back(v);
            ++k;
        }
        if (k != dim)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) + " values");
    }
    if (pts.size() == 0) throw ConfigError(path + ": no points");
    return pts;
}

potential::CompactSetMesh build_mesh(const ShapeSpec& s) {
    using namespace potential;
    if (s.shape == "interval") return interval_mesh(s.n);
    if (s.shape == "square") return square_mesh(s.n);
    if (s.shape == "ball") return ball_mesh(s.dim, s.radius, s.h > 0 ? s.h : s.radius / 8);
    if (s.shape == "rectangle") return parabolic_rectangle(s.t0, s.t1, s.x0, s.x1, s.nt, s.n);
    CompactSetMesh mesh;
    mesh.points = read_points_csv(s.file);
    mesh.metric = s.metric;
    mesh.h = s.h;
    if (mesh.h <= 0.0) {
        // mean nearest-neighbour distance
        const std::size_t n = mesh.points.size();
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = kInf;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) best = std::min(best, distance(mesh.metric, mesh.points[i], mesh.points[j], mesh.points.dim));
            sum += std::isfinite(best) ? best : 0.0;
        }
        mesh.h = n > 1 ? sum / n : 1.0;
        if (mesh.h <= 0.0) mesh.h = 1.0;
    }
    return mesh;
}

// ---------------------------------------------------------------- kernel-check

class KernelCheckJob : public Job {
public:
    explicit KernelCheckJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        opt_.boundary = cfg_.grid.boundary;
        opt_.n_t = static_cast<int>(p.integer("n_t", 50, 1, 100000));
        opt_.n_xy = static_cast<int>(p.integer("n_xy", 100, 2, 100000));
        opt_.t_min = p.number("t_min", 1e-6);
        opt_.t_max = p.number("t_max", 10.0);
        opt_.truncation_tol = p.number("truncation_tol", 1e-12);
        opt_.mass_tol = p.number("mass_tol", 1e-8);
        opt_.agreement_tol = p.number("agreement_tol", 1e-10);
        opt_.semigroup_tol = p.number("semigroup_tol", 1e-6);
        opt_.semigroup_random = static_cast<int>(p.integer("semigroup_random", 60, 0, 100000));
        opt_.seed = cfg_.rng.master_seed;
        small_time_ = p.boolean("small_time", true);
        if (!(opt_.t_min >= 1e-6 && opt_.t_max > opt_.t_min)) p.fail("t_min", "needs 1e-6 <= t_min < t_max");
        if (!(opt_.truncation_tol > 0.0)) p.fail("truncation_tol", "must be positive");
        p.finish();
    }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        auto opt = opt_;
        opt.threads = ctx.threads;
        const auto lat = checks::kernel_lattice(opt);
        std::vector<checks::Row> rows = lat.rows;
        out.claims.push_back(make_claim("kernel.positivity", "strict positivity of the heat kernel",
                                        lat.min_positive, kNaN, "> 0",
                                        verdict_of(lat.min_positive > 0.0 && lat.nonnegative),
                                        "pairs whose free-space term underflows only need >= 0"));
        out.claims.push_back(make_claim("kernel.symmetry", "symmetry G_t(x,y) = G_t(y,x)", lat.max_asymmetry,
                                        0.0, "== 0", verdict_of(lat.max_asymmetry == 0.0)));
        if (opt.boundary == kernel::Boundary::neumann)
            out.claims.push_back(at_most("kernel.mass", "mass conservation of the Neumann kernel",
                                         lat.max_mass_error, opt.mass_tol));
        out.claims.push_back(at_most("kernel.dual_agreement",
                                     "eigenfunction series against image sum", lat.max_agreement,
                                     opt.agreement_tol));
        out.claims.push_back(at_most("kernel.semigroup", "semigroup property of the Green kernel",
                                     lat.max_semigroup, opt.semigroup_tol));
        out.claims.push_back(info("kernel.envelope_constant",
                                  "Gaussian upper envelope with exponent rate 1/2 (literal form)",
                                  lat.envelope_constant, kNaN,
                                  "max of G / ((2 pi t)^{-1/2} exp(-|x-y|^2 / 2t)) over lattice times >= 1e-3; "
                                  "recorded, not asserted"));
        if (small_time_) {
            const auto app = checks::kernel_small_time(opt.boundary);
            rows.insert(rows.end(), app.rows.begin(), app.rows.end());
            out.claims.push_back(at_least("kernel.local_l2_lower",
                                          "local L2 lower bound of the kernel over a parabolic box",
                                          app.min_local_lower, 0.3));
            out.claims.push_back(at_most("kernel.l2q_stability",
                                         "L^{2q} upper bound scaling eps^{3/2-q}, spread over three decades",
                                         app.max_l2q_spread, 0.1));
            out.claims.push_back(at_most("kernel.l2q_q1", "L2 upper bound ratio at q = 1", app.l2q_q1_max, 1.0));
            out.claims.push_back(at_most("kernel.l2_window",
                                         "time-window L2 bound (b-a)/(sqrt b + sqrt a), ratio to the bound",
                                         app.max_window_ratio, 1.0));
        }
        out.tables.push_back(check_table("kernel", rows));
    }

private:
    checks::KernelLatticeOptions opt_;
    bool small_time_ = true;
};

// ---------------------------------------------------------------- simulate

class SimulateJob : public Job {
public:
    explicit SimulateJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        paths_ = p.count("paths", 1);
        first_ = p.count("first_path", 0, 0);
        json_ = p.text("format", "csv", {"csv", "json"}) == "json";
        stride_t_ = static_cast<int>(p.integer("stride_t", 1, 1, 1 << 30));
        stride_x_ = static_cast<int>(p.integer("stride_x", 1, 1, 1 << 30));
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&paths_, 1}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        const auto model = build_model(cfg_);
        std::vector<Trajectory> paths(paths_);
        parallel_for(paths_, ctx.threads, [&](std::size_t k) {
            paths[k] = simulate(cfg_.grid, *model, cfg_.rng, first_ + k);
        });
        Table t{"trajectory", {"path", "n", "m", "component", "value"}, {}, json_};
        double max_abs = 0.0;
        bool zero_start = true;
        for (const auto& tr : paths) {
            for (int m = 0; m <= tr.grid.nx; ++m)
                for (int i = 0; i < tr.dim; ++i) zero_start = zero_start && tr.at(0, m, i) == 0.0;
            for (int n = 0; n <= tr.grid.nt(); ++n) {
                const bool keep_n = n % stride_t_ == 0 || n == tr.grid.nt();
                for (int m = 0; m <= tr.grid.nx; ++m)
                    for (int i = 0; i < tr.dim; ++i) {
                        max_abs = std::max(max_abs, std::abs(tr.at(n, m, i)));
                        if (keep_n && m % stride_x_ == 0)
                            t.add({static_cast<std::int64_t>(tr.path_index), std::int64_t{n}, std::int64_t{m},
                                   std::int64_t{i}, tr.at(n, m, i)});
                    }
            }
        }
        out.claims.push_back(make_claim("simulate.initial_zero", "zero initial condition u(0,x) = 0",
                                        zero_start ? 0.0 : 1.0, 0.0, "== 0", verdict_of(zero_start)));
        out.claims.push_back(info("simulate.max_abs", "finite values under the blow-up guard", max_abs));
        out.tables.push_back(std::move(t));
    }

private:
    std::size_t paths_ = 1, first_ = 0;
    bool json_ = false;
    int stride_t_ = 1, stride_x_ = 1;
};

// ---------------------------------------------------------------- holder

class HolderJob : public Job {
public:
    explicit HolderJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        const double dx = cfg_.grid.dx();
        paths_ = p.count("paths", 500, 3);
        p_ = p.number("p", 2.0);
        t_ = p.number("t", cfg_.grid.T);
        x_ = p.number("x", 0.5);
        component_ = static_cast<int>(p.integer("component", 0, 0, cfg_.dim - 1));
        modes_ = p.texts("modes", {"time", "space"});
        time_lags_ = p.numbers("time_lags", {1.0 / 1024, 1.0 / 512, 1.0 / 256, 1.0 / 128, 1.0 / 64});
        // the explicit scheme carries a one-cell nugget; stay a few cells out
        space_lags_ = p.numbers("space_lags", {4 * dx, 6 * dx, 8 * dx, 12 * dx, 16 * dx});
        time_tol_ = p.number("time_tolerance", 0.1);
        space_tol_ = p.number("space_tolerance", 0.15);
        if (!(p_ > 0.0)) p.fail("p", "must be positive");
        if (!(t_ > 0.0 && t_ <= cfg_.grid.T + 1e-12)) p.fail("t", "must lie in (0, T]");
        if (!(x_ >= 0.0 && x_ <= 1.0)) p.fail("x", "must lie in [0, 1]");
        for (const auto& m : modes_)
            if (m != "time" && m != "space") p.fail("modes", "entries are 'time' or 'space'");
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&paths_, 3}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        const auto model = build_model(cfg_);
        Table t{"moments", {"mode", "lag", "moment", "stderr"}, {}, false};
        for (const auto& mode : modes_) {
            const bool time = mode == "time";
            const auto res = holder_run(cfg_.grid, *model, cfg_.rng, paths_, p_, time ? LagMode::time : LagMode::space,
                                        t_, x_, time ? time_lags_ : space_lags_, component_, ctx.threads);
            for (std::size_t k = 0; k < res.lags.size(); ++k)
                t.add({mode, res.lags[k], res.moments[k], res.moment_stderr[k]});
            const double pred = time ? p_ / 4 : p_ / 2;
            const double tol = time ? time_tol_ : space_tol_;
            out.claims.push_back(within("holder." + mode + "_slope",
                                        time ? "Holder moment bound, time increments |t-s|^{p/4}"
                                             : "Holder moment bound, space increments |x-y|^{p/2}",
                                        res.fit.exponent, pred - tol, pred + tol, pred));
        }
        out.tables.push_back(std::move(t));
    }

private:
    std::size_t paths_;
    double p_, t_, x_;
    int component_;
    std::vector<std::string> modes_;
    std::vector<double> time_lags_, space_lags_;
    double time_tol_, space_tol_;
};

// ---------------------------------------------------------------- malliavin

malliavin::OffsetFamily parse_family(const Fields& p, const std::string& key, const std::string& name) {
    if (name == "time") return malliavin::OffsetFamily::time;
    if (name == "space") return malliavin::OffsetFamily::space;
    if (name == "mixed") return malliavin::OffsetFamily::mixed;
    p.fail(key, "unknown offset family '" + name + "' (time, space, mixed)");
}

class MalliavinJob : public Job {
public:
    explicit MalliavinJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        mode_ = p.text("mode", "scaling", {"scaling", "bump", "linear_gamma"});
        paths_ = p.count("paths", mode_ == "scaling" ? 200 : mode_ == "bump" ? 1 : 8, mode_ == "scaling" ? 200 : 1);
        t_ = p.number("t", std::min(0.5, cfg_.grid.T));
        x_ = p.number("x", 0.5);
        std::vector<double> deltas = stats::dyadic_scales(2, 6);
        std::vector<std::string> fams{"space", "mixed"};
        if (p.has("anchors")) {
            // "t=0.5,x=0.5,k=2:6,families=space+mixed"
            std::stringstream ss(p.text("anchors", ""));
            std::string item;
            while (std::getline(ss, item, ',')) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) p.fail("anchors", "expected key=value, got '" + item + "'");
                const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
                try {
                    if (key == "t") {
                        t_ = std::stod(val);
                    } else if (key == "x") {
                        x_ = std::stod(val);
                    } else if (key == "k") {
                        const auto colon = val.find(':');
                        if (colon == std::string::npos) p.fail("anchors", "k needs k0:k1");
                        deltas = stats::dyadic_scales(std::stod(val.substr(0, colon)), std::stod(val.substr(colon + 1)));
                    } else if (key == "families") {
                        fams.clear();
                        std::stringstream fs(val);
                        std::string f;
                        while (std::getline(fs, f, '+')) fams.push_back(f);
                    } else {
                        p.fail("anchors", "unknown key '" + key + "' (t, x, k, families)");
                    }
                } catch (const std::logic_error&) {
                    p.fail("anchors", "bad number in '" + item + "'");
                }
            }
        }
        deltas_ = p.numbers("deltas", deltas);
        fams = p.texts("families", fams);
        for (const auto& f : fams) families_.push_back(parse_family(p, "families", f));
        h_ = p.number("h", 1e-5);
        nodes_ = static_cast<int>(p.integer("nodes", 64, 2, 100000));
        tolerance_ = p.number("tolerance", mode_ == "bump" ? 0.05 : 0.03);
        if (!(t_ > 0.0 && t_ <= cfg_.grid.T + 1e-12)) p.fail("t", "must lie in (0, T]");
        if (!(x_ > 0.0 && x_ < 1.0)) p.fail("x", "must lie in (0, 1)");
        if (mode_ == "scaling" && deltas_.size() < 3) p.fail("deltas", "a slope needs at least 3 scales");
        if (!(h_ > 0.0)) p.fail("h", "must be positive");
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&paths_, mode_ == "scaling" ? 200u : 1u}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        const auto model = build_model(cfg_);
        if (mode_ == "scaling") scaling(ctx, *model, out);
        if (mode_ == "bump") bump(ctx, *model, out);
        if (mode_ == "linear_gamma") gamma(ctx, *model, out);
    }

private:
    void scaling(const RunContext& ctx, const CoefficientModel& model, ReportBundle& out) const {
        using namespace malliavin;
        const auto& g = cfg_.grid;
        const auto partners = anchor_ladder(g, t_, x_, deltas_, families_);
        const auto run = scaling_run(g, model, cfg_.rng, paths_, t_, x_, partners, ctx.threads);
        Table blocs{"blocs", {"family", "scale", "delta", "bloc", "statistic", "value", "stderr"}, {}, false};
        Table eigen{"eigen",
                    {"family", "scale", "delta", "lambda_min_mean", "lambda_min_stderr", "topd_product_mean",
                     "topd_product_stderr", "derivative_norm_mean", "non_psd"},
                    {},
                    false};
        for (const auto& ps : run.partners) {
            const std::string fam = to_string(ps.partner.family);
            for (int b = 0; b < 4; ++b)
                blocs.add({fam, ps.partner.nominal, ps.partner.delta, std::int64_t{b + 1}, std::string("mean_abs"),
                           ps.bloc_mean[b], ps.bloc_stderr[b]});
            eigen.add({fam, ps.partner.nominal, ps.partner.delta, ps.lambda_min_mean, ps.lambda_min_stderr,
                       ps.topd_mean, ps.topd_stderr, ps.derivative_norm_mean,
                       static_cast<std::int64_t>(ps.non_psd)});
        }
        for (const auto fam : families_) {
            const std::string f = to_string(fam);
            const std::string pre = "malliavin." + f + ".";
            const auto b = bloc_scaling(run, fam);
            const auto e = eigen_scaling(run, fam);
            const auto dn = derivative_norm_scaling(run, fam);
            out.claims.push_back(within(pre + "bloc1", "bloc (1) of the two-point matrix is of constant order",
                                        b.bloc1.exponent, -0.1, 0.1, 0.0));
            out.claims.push_back(within(pre + "bloc23", "cross blocs (2)/(3) scale like Delta^{1/2}",
                                        b.bloc23.exponent, 0.35, 0.65, 0.5));
            out.claims.push_back(within(pre + "bloc4", "increment bloc (4) scales like Delta",
                                        b.bloc4.exponent, 0.85, 1.15, 1.0));
            out.claims.push_back(within(pre + "lambda_min", "smallest eigenvalue of the two-point matrix scales like Delta",
                                        e.lambda_min.exponent, 0.8, 1.2, 1.0));
            out.claims.push_back(within(pre + "topd", "product of the d largest eigenvalues stays bounded below",
                                        e.topd.exponent, -0.15, 0.15, 0.0));
            out.claims.push_back(within(pre + "derivative_norm", "moment bound on the derivative norm, no trend in Delta",
                                        dn.exponent, -0.1, 0.1, 0.0));
            // mean lambda_min strictly decreasing as Delta decreases
            std::vector<std::pair<double, double>> lam;
            std::size_t non_psd = 0;
            for (const auto& ps : run.partners)
                if (ps.partner.family == fam) {
                    lam.emplace_back(ps.partner.delta, ps.lambda_min_mean);
                    non_psd += ps.non_psd;
                }
            std::sort(lam.begin(), lam.end());
            bool decreasing = true;
            for (std::size_t k = 1; k < lam.size(); ++k) decreasing = decreasing && lam[k - 1].second < lam[k].second;
            out.claims.push_back(make_claim(pre + "degeneration", "lambda_min decreases as the two points merge",
                                            decreasing ? 1.0 : 0.0, 1.0, "strictly monotone", verdict_of(decreasing)));
            out.claims.push_back(make_claim(pre + "psd", "Malliavin matrices are symmetric PSD",
                                            static_cast<double>(non_psd), 0.0, "== 0", verdict_of(non_psd == 0)));
            if (fam == OffsetFamily::space)
                out.claims.push_back(within("malliavin.same_time.lambda_min",
                                            "same-time anchors: lambda_min against |x-y| without eta correction",
                                            e.lambda_min.exponent, 0.8, 1.2, 1.0));
        }
        out.tables.push_back(std::move(blocs));
        out.tables.push_back(std::move(eigen));
    }

    void bump(const RunContext& ctx, const CoefficientModel& model, ReportBundle& out) const {
        const auto res = checks::bump_checks(cfg_.grid, model, cfg_.rng, paths_, h_, ctx.threads);
        Table t{"bump", {"model", "path", "n_star", "m_star", "k", "n", "m", "i", "bump", "propagated", "error"}, {}, false};
        for (const auto& c : res.cases)
            t.add({c.model, static_cast<std::int64_t>(c.path), std::int64_t{c.n_star}, std::int64_t{c.m_star},
                   std::int64_t{c.k}, std::int64_t{c.n}, std::int64_t{c.m}, std::int64_t{c.i}, c.bump, c.propagated,
                   c.error});
        out.claims.push_back(at_most("malliavin.bump_constant",
                                     "constant sigma: derivative is sigma times the discrete heat propagator",
                                     res.constant_max_error, 1e-10));
        out.claims.push_back(at_most("malliavin.bump_model", "linearized derivative equation against a pathwise bump",
                                     res.model_max_error, tolerance_));
        out.tables.push_back(std::move(t));
    }

    void gamma(const RunContext& ctx, const CoefficientModel& model, ReportBundle& out) const {
        const auto res = checks::gamma_checks(cfg_.grid, model, cfg_.rng, paths_, x_, nodes_, ctx.threads);
        Table t{"linear_gamma", {"i", "gamma_ii", "c", "rel_error"}, {}, false};
        for (std::size_t i = 0; i < res.diagonal.size(); ++i)
            t.add({static_cast<std::int64_t>(i), res.diagonal[i], res.c, std::abs(res.diagonal[i] - res.c) / res.c});
        out.claims.push_back(at_most("malliavin.gamma_linear", "linear case: gamma = c(t) I with c the kernel L2 integral",
                                     res.max_rel_error, tolerance_));
        out.claims.push_back(at_most("malliavin.gamma_offdiag", "linear case: off-diagonal entries vanish",
                                     res.max_offdiag, 1e-12 * res.c));
        out.claims.push_back(make_claim("malliavin.gamma_psd", "Malliavin matrices are symmetric PSD",
                                        static_cast<double>(res.non_psd), 0.0,
                                        "== 0 of " + std::to_string(res.checked), verdict_of(res.non_psd == 0)));
        if (model.ellipticity_rho > 0.0)
            out.claims.push_back(make_claim("malliavin.gamma_invertible",
                                            "elliptic model: one-point matrix invertible on every sampled path",
                                            res.min_det, kNaN, "> 0", verdict_of(res.min_det > 0.0)));
        else
            out.claims.push_back(info("malliavin.gamma_invertible", "one-point matrix determinant (no ellipticity claimed)",
                                      res.min_det));
        out.tables.push_back(std::move(t));
    }

    std::string mode_;
    std::size_t paths_;
    double t_, x_;
    std::vector<double> deltas_;
    std::vector<malliavin::OffsetFamily> families_;
    double h_;
    int nodes_;
    double tolerance_;
};

// ---------------------------------------------------------------- capacity / hausdorff / boxdim

class CapacityJob : public Job {
public:
    explicit CapacityJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        checks_ = p.text("mode", "measure", {"measure", "checks"}) == "checks";
        pairs_ = static_cast<int>(p.integer("pairs", 50, 1, 100000));
        shape_ = read_shape(p);
        betas_ = p.numbers("beta", {0.5});
        cutoff_ = p.number("cutoff", 0.0);
        n0_ = p.number("n0", 0.0);
        tolerance_ = p.number("tolerance", 1e-6);
        if (!(tolerance_ > 0.0)) p.fail("tolerance", "must be positive");
        p.finish();
    }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        if (checks_) {
            const auto c = checks::capacity_checks(cfg_.rng.master_seed, pairs_, ctx.threads);
            out.claims.push_back(make_claim("capacity.negative_index", "Cap_beta = 1 for beta < 0 (K = 1)",
                                            c.negative_index_error, 0.0, "== 0", verdict_of(c.negative_index_error == 0.0)));
            out.claims.push_back(within("capacity.singleton_halving", "singleton capacity at beta = 1 is linear in the cutoff",
                                        c.singleton_ratio, 0.45, 0.55, 0.5));
            out.claims.push_back(at_most("capacity.two_atom", "two-atom equilibrium against a one-parameter oracle",
                                         c.two_atom_error, 1e-4));
            out.claims.push_back(at_most("capacity.duality_gap", "equilibrium measure optimality (duality gap)",
                                         c.max_gap, 1e-6));
            out.claims.push_back(make_claim("capacity.monotone", "capacity is monotone under inclusion",
                                            c.monotone_violations, 0.0,
                                            "== 0 of " + std::to_string(c.monotone_pairs),
                                            verdict_of(c.monotone_violations == 0)));
            out.tables.push_back(check_table("checks", c.rows));
            return;
        }
        const auto mesh = build_mesh(shape_);
        potential::CapacityOptions opt;
        opt.tolerance = tolerance_;
        opt.threads = ctx.threads;
        Table t{"capacity", {"beta", "h", "n_points", "capacity", "energy", "duality_gap", "iterations", "n0"}, {}, false};
        double worst_gap = 0.0;
        for (double beta : betas_) {
            const auto r = potential::capacity(mesh, {beta, n0_, cutoff_}, opt);
            t.add({beta, mesh.h, static_cast<std::int64_t>(mesh.points.size()), r.capacity, r.energy, r.duality_gap,
                   static_cast<std::int64_t>(r.iterations), r.n0});
            out.claims.push_back(info("capacity.beta_" + num(beta), "Riesz capacity of the mesh", r.capacity));
            worst_gap = std::max(worst_gap, r.duality_gap);
        }
        out.claims.push_back(at_most("capacity.duality_gap", "equilibrium measure optimality (duality gap)",
                                     worst_gap, tolerance_));
        out.tables.push_back(std::move(t));
    }

private:
    bool checks_;
    int pairs_;
    ShapeSpec shape_;
    std::vector<double> betas_;
    double cutoff_, n0_, tolerance_;
};

class HausdorffJob : public Job {
public:
    explicit HausdorffJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        checks_ = p.text("mode", "measure", {"measure", "checks"}) == "checks";
        shape_ = read_shape(p);
        betas_ = p.numbers("beta", {1.0});
        ladder_ = read_scales(p, "epsilon_ladder", {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64});
        p.finish();
    }

protected:
    void execute(const RunContext&, ReportBundle& out) const override {
        if (checks_) {
            const auto c = checks::hausdorff_checks();
            const double worst = std::abs(c.unit_min - 1.0) > std::abs(c.unit_max - 1.0) ? c.unit_min : c.unit_max;
            out.claims.push_back(make_claim("hausdorff.unit_interval", "1-dimensional measure of [0, 1] from covers, eps <= 1/64",
                                            worst, 1.0, "[0.9, 1.1]",
                                            verdict_of(c.unit_min >= 0.9 && c.unit_max <= 1.1)));
            out.claims.push_back(make_claim("hausdorff.below_dimension", "cover sums grow for beta below the dimension",
                                            c.below_increasing, 1.0, "increasing", verdict_of(c.below_increasing)));
            out.claims.push_back(make_claim("hausdorff.above_dimension", "cover sums shrink for beta above the dimension",
                                            c.above_decreasing, 1.0, "decreasing", verdict_of(c.above_decreasing)));
            out.claims.push_back(make_claim("hausdorff.negative_index", "H_beta = infinity for beta < 0",
                                            c.negative_infinite ? kInf : 0.0, kInf, "infinite",
                                            verdict_of(c.negative_infinite)));
            out.tables.push_back(check_table("checks", c.rows));
            return;
        }
        const auto mesh = build_mesh(shape_);
        Table t{"covers", {"beta", "epsilon", "value", "infinite", "balls"}, {}, false};
        for (double beta : betas_) {
            double last = kNaN;
            for (double eps : ladder_) {
                const auto r = potential::hausdorff_upper(mesh, beta, eps);
                t.add({beta, eps, r.value, std::int64_t{r.infinite ? 1 : 0}, static_cast<std::int64_t>(r.ball_count)});
                last = r.value;
            }
            out.claims.push_back(info("hausdorff.beta_" + num(beta), "cover upper bound at the finest scale", last));
        }
        out.tables.push_back(std::move(t));
    }

private:
    bool checks_;
    ShapeSpec shape_;
    std::vector<double> betas_, ladder_;
};

class BoxdimJob : public Job {
public:
    explicit BoxdimJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        shape_ = read_shape(p);
        scales_ = read_scales(p, p.has("epsilon_ladder") ? "epsilon_ladder" : "scales",
                              stats::dyadic_scales(1, 9));
        trim_ = static_cast<int>(p.integer("trim", 2, 0, 100));
        predicted_ = p.number("predicted", shape_.known_dimension);
        tolerance_ = p.number("tolerance", 0.1);
        p.finish();
    }

protected:
    void execute(const RunContext&, ReportBundle& out) const override {
        const auto mesh = build_mesh(shape_);
        const auto box = potential::box_dimension(mesh.points, mesh.metric, scales_, {trim_});
        Table t{"counts", {"scale", "count", "in_fit"}, {}, false};
        for (std::size_t k = 0; k < box.scales.size(); ++k) {
            const bool used = std::find(box.fit.scales.begin(), box.fit.scales.end(), 1.0 / box.scales[k]) !=
                              box.fit.scales.end();
            t.add({box.scales[k], box.counts[k], std::int64_t{used ? 1 : 0}});
        }
        if (std::isnan(predicted_))
            out.claims.push_back(info("boxdim.dimension", "box-counting dimension", box.fit.exponent));
        else
            out.claims.push_back(within("boxdim.dimension", "box-counting dimension of a set of known dimension",
                                        box.fit.exponent, predicted_ - tolerance_, predicted_ + tolerance_, predicted_));
        out.tables.push_back(std::move(t));
    }

private:
    ShapeSpec shape_;
    std::vector<double> scales_;
    int trim_;
    double predicted_, tolerance_;
};

// ---------------------------------------------------------------- density / collapse

class DensityJob : public Job {
public:
    explicit DensityJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        oracle_ = p.text("mode", "bounds", {"bounds", "linear_oracle"}) == "linear_oracle";
        opt_.t_list = p.numbers("t_list", opt_.t_list);
        opt_.x_list = p.numbers("x_list", opt_.x_list);
        opt_.n_samples = p.count("samples", 10000, 500);
        opt_.fit_floor = p.number("fit_floor", opt_.fit_floor);
        opt_.spread_limit = p.number("spread_limit", opt_.spread_limit);
        opt_.c_margin = p.number("c_margin", opt_.c_margin);
        variance_paths_ = p.count("variance_paths", 2000, 2);
        x_ = p.number("x", 0.5);
        se_factor_ = p.number("se_factor", 3.0);
        sup_fraction_ = p.number("sup_fraction", 0.05);
        if (!oracle_) {
            for (double t : opt_.t_list)
                if (!(t > 0.0 && t <= cfg_.grid.T + 1e-12)) p.fail("t_list", "times must lie in (0, T]");
            for (double x : opt_.x_list)
                if (!(x > 0.0 && x < 1.0)) p.fail("x_list", "sites must lie in (0, 1)");
        }
        if (!(x_ > 0.0 && x_ < 1.0)) p.fail("x", "must lie in (0, 1)");
        if (oracle_ && (cfg_.model != "linear-test" || cfg_.dim != 1))
            p.fail("mode", "linear_oracle needs model linear-test with dim 1");
        p.finish();
    }
    std::vector<PathCount> path_counts() override {
        return {{&opt_.n_samples, 500}, {&variance_paths_, 2}};
    }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        if (oracle_) {
            const auto r = checks::linear_gaussian_oracle(cfg_.grid, cfg_.rng, variance_paths_, opt_.n_samples, x_,
                                                          ctx.threads);
            const double band = se_factor_ * r.stderr_variance;
            out.claims.push_back(make_claim("density.linear_variance",
                                            "linear case: Var u(t,x) equals the kernel L2 integral",
                                            r.variance, r.oracle, "+- " + num(se_factor_) + " SE = " + num(band),
                                            verdict_of(std::abs(r.variance - r.oracle) <= band)));
            out.claims.push_back(at_most("density.linear_kde", "linear case: KDE against the exact normal, sup / peak",
                                         r.sup_distance / r.kde_peak, sup_fraction_));
            Table v{"variance", {"t", "x", "paths", "variance", "stderr", "oracle"}, {}, false};
            v.add({r.t, r.x, static_cast<std::int64_t>(r.variance_paths), r.variance, r.stderr_variance, r.oracle});
            Table k{"kde", {"z", "kde", "exact"}, {}, false};
            for (std::size_t i = 0; i < r.z.size(); ++i) k.add({r.z[i], r.kde[i], r.exact[i]});
            out.tables.push_back(std::move(v));
            out.tables.push_back(std::move(k));
            return;
        }
        auto opt = opt_;
        opt.threads = ctx.threads;
        const auto model = build_model(cfg_);
        const auto r = stats::density_bound_check(cfg_.grid, *model, cfg_.rng, opt);
        Table t{"sites", {"t", "x", "peak", "sample_sd", "c_fit", "tail_ratio"}, {}, false};
        for (const auto& s : r.sites) t.add({s.t, s.x, s.peak, s.sample_sd, s.c_fit, s.tail_ratio});
        out.claims.push_back(at_most("density.upper", "density bounded uniformly over (t, x): relative spread of peaks",
                                     r.spread, opt.spread_limit));
        out.claims.push_back(at_least("density.lower", "Gaussian-type lower bound c t^{-d/4} exp(-|z|^2 / (c t^{1/2}))",
                                      r.c_lower, opt.c_margin));
        out.tables.push_back(std::move(t));
    }

private:
    bool oracle_;
    stats::DensityBoundOptions opt_;
    std::size_t variance_paths_;
    double x_, se_factor_, sup_fraction_;
};

class CollapseJob : public Job {
public:
    explicit CollapseJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        opt_.t = p.number("t", std::min(0.5, cfg_.grid.T));
        opt_.x = p.number("x", 0.25);
        opt_.offsets = p.numbers("offsets", {1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2});
        const std::string mode = p.text("mode", "space", {"space", "mixed"});
        opt_.mode = stats::parse_collapse_mode(mode);
        opt_.n_samples = p.count("samples", 10000, 500);
        opt_.ratio_limit = p.number("ratio_limit", 2.0);
        if (!(opt_.t > 0.0 && opt_.t <= cfg_.grid.T + 1e-12)) p.fail("t", "must lie in (0, T]");
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&opt_.n_samples, 500}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        auto opt = opt_;
        opt.threads = ctx.threads;
        const auto model = build_model(cfg_);
        const auto r = stats::increment_collapse(cfg_.grid, *model, cfg_.rng, opt);
        Table t{"scales", {"offset", "delta", "rescaled_variance", "sup_density"}, {}, false};
        for (const auto& s : r.scales) t.add({s.offset, s.delta, s.rescaled_variance, s.sup_density});
        out.claims.push_back(at_most("collapse.ratio",
                                     "increments rescaled by Delta^{1/2} have densities of one size (max / min sup)",
                                     r.ratio, opt.ratio_limit));
        out.claims.push_back(info("collapse.sup_slope", "slope of the rescaled sup density against Delta",
                                  r.sup_fit.exponent, 0.0));
        out.tables.push_back(std::move(t));
    }

private:
    stats::CollapseOptions opt_;
};

// ---------------------------------------------------------------- hitting

Table hit_table(const std::string& name) {
    return Table{name,
                 {"target", "hits", "paths", "estimate", "ci_lo", "ci_hi", "zero_hit_upper", "noise_floor",
                  "resolution_warning"},
                 {},
                 false};
}

void add_hit_row(Table& t, const stats::HitReport& r) {
    t.add({r.target.describe(), static_cast<std::int64_t>(r.hits), static_cast<std::int64_t>(r.n_paths), r.estimate,
           r.ci.lo, r.ci.hi, r.zero_hit_upper, r.noise_floor, std::int64_t{r.resolution_warning ? 1 : 0}});
}

class HitJob : public Job {
public:
    explicit HitJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        paths_ = p.count("paths", 1000, 1);
        window_ = read_window(p, "window", {});
        check_window(p, cfg_, window_);
        expect_ = p.text("expect", "auto", {"auto", "hit", "none"});
        const Json& targets = p.raw("targets");
        if (targets.is_null()) {
            targets_.push_back(stats::Target::ball(std::vector<double>(cfg_.dim, 0.0), 0.05));
        } else {
            if (!targets.is_array() || targets.empty()) p.fail("targets", "expected a non-empty array");
            for (std::size_t k = 0; k < targets.size(); ++k) {
                const Fields t(targets[k], p.where("targets") + "/" + std::to_string(k));
                if (t.has("ball")) {
                    const Fields b = t.object("ball");
                    auto c = b.numbers("centre", std::vector<double>(cfg_.dim, 0.0));
                    const double r = b.number("radius");
                    if (c.size() != static_cast<std::size_t>(cfg_.dim)) b.fail("centre", "dimension differs from the model");
                    if (!(r > 0.0)) b.fail("radius", "must be positive");
                    b.finish();
                    targets_.push_back(stats::Target::ball(std::move(c), r));
                } else if (t.has("box")) {
                    const Fields b = t.object("box");
                    auto lo = b.numbers("lo", {}), hi = b.numbers("hi", {});
                    if (lo.size() != static_cast<std::size_t>(cfg_.dim) || hi.size() != lo.size())
                        b.fail("lo", "lo and hi need the model dimension");
                    for (std::size_t i = 0; i < lo.size(); ++i)
                        if (!(lo[i] < hi[i])) b.fail("hi", "needs lo < hi componentwise");
                    b.finish();
                    targets_.push_back(stats::Target::box(std::move(lo), std::move(hi)));
                } else {
                    t.fail("ball", "a target is {\"ball\": {...}} or {\"box\": {...}}");
                }
                t.finish();
            }
        }
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&paths_, 1}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        const auto model = build_model(cfg_);
        const auto reports = stats::hit_probability(cfg_.grid, *model, cfg_.rng, paths_, window_, targets_, ctx.threads);
        const bool expect_hit = expect_ == "hit" || (expect_ == "auto" && cfg_.dim < 6);
        Table t = hit_table("hits");
        for (std::size_t k = 0; k < reports.size(); ++k) {
            const auto& r = reports[k];
            add_hit_row(t, r);
            const std::string id = "hit." + std::to_string(k);
            const std::string ref = "points are not polar below the critical dimension: P{u(I x J) meets A} > 0";
            if (expect_hit)
                out.claims.push_back(make_claim(id, ref, r.ci.lo, kNaN, "Wilson 95% lower end > 0", verdict_of(r.ci.lo > 0.0),
                                                r.target.describe() + (r.resolution_warning ? "; radius below the noise floor" : "")));
            else
                out.claims.push_back(info(id, ref, r.estimate, kNaN, r.target.describe()));
        }
        out.tables.push_back(std::move(t));
    }

private:
    std::size_t paths_;
    stats::HitWindow window_;
    std::string expect_;
    std::vector<stats::Target> targets_;
};

class SandwichJob : public Job {
public:
    explicit SandwichJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        opt_.variant = stats::parse_sandwich_variant(p.text("variant", "space_time", {"space_time", "fixed_t", "fixed_x"}));
        opt_.z = read_level(p, cfg_.dim);
        opt_.radii = p.numbers("radii", opt_.radii);
        opt_.window = read_window(p, "window", opt_.window);
        check_window(p, cfg_, opt_.window);
        opt_.n_paths = p.count("paths", 1000, 1);
        opt_.eta = p.number("eta", 0.05);
        opt_.mesh_per_radius = static_cast<int>(p.integer("mesh_per_radius", 6, 1, 1000));
        opt_.cover_factor = p.number("cover_factor", 1.0);
        flat_ratio_ = p.number("flat_ratio", 0.5);
        for (double r : opt_.radii)
            if (!(r > 0.0)) p.fail("radii", "radii must be positive");
        if (opt_.radii.empty()) p.fail("radii", "needs at least one radius");
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&opt_.n_paths, 1}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        auto opt = opt_;
        opt.threads = ctx.threads;
        const auto model = build_model(cfg_);
        const auto r = stats::sandwich_experiment(cfg_.grid, *model, cfg_.rng, opt);
        Table t{"rows",
                {"radius", "hits", "paths", "estimate", "ci_lo", "ci_hi", "capacity", "cover_value", "cover_infinite",
                 "noise_floor"},
                {},
                false};
        for (const auto& row : r.rows)
            t.add({row.radius, static_cast<std::int64_t>(row.hit.hits), static_cast<std::int64_t>(row.hit.n_paths),
                   row.hit.estimate, row.hit.ci.lo, row.hit.ci.hi, row.capacity, row.cover_value,
                   std::int64_t{row.cover_infinite ? 1 : 0}, row.hit.noise_floor});
        const std::string v = stats::to_string(r.variant);
        const std::string ref = "hitting probabilities sandwiched between Cap_{" + num(r.lower_index) + "} and H_{" +
                                num(r.upper_index) + "} (" + v + ")";
        if (r.lower_index < 0.0)
            out.claims.push_back(at_least("sandwich.flat", ref + "; negative capacity index keeps the lower bound constant",
                                          r.min_over_max, flat_ratio_));
        else
            out.claims.push_back(info("sandwich.flat", ref, r.min_over_max));
        const int critical = r.variant == stats::SandwichVariant::space_time ? 6
                             : r.variant == stats::SandwichVariant::fixed_t  ? 2
                                                                             : 4;
        const auto smallest = std::min_element(r.rows.begin(), r.rows.end(),
                                               [](const auto& a, const auto& b) { return a.radius < b.radius; });
        const std::string nref = "points are not polar below the critical dimension (smallest ball)";
        if (cfg_.dim < critical)
            out.claims.push_back(make_claim("sandwich.nonpolar", nref, smallest->hit.ci.lo, kNaN, "Wilson 95% lower end > 0",
                                            verdict_of(smallest->hit.ci.lo > 0.0), smallest->hit.target.describe()));
        else
            out.claims.push_back(info("sandwich.nonpolar", nref, smallest->hit.estimate));
        out.claims.push_back(info("sandwich.hit_slope", "log-log slope of hit probability in r", r.hit_slope));
        out.claims.push_back(info("sandwich.capacity_slope", "log-log slope of the capacity term in r", r.capacity_slope));
        out.claims.push_back(info("sandwich.cover_slope", "log-log slope of the cover term in r", r.cover_slope));
        out.tables.push_back(std::move(t));
    }

private:
    stats::SandwichOptions opt_;
    double flat_ratio_;
};

// ---------------------------------------------------------------- level sets / dimensions

class LevelsetJob : public Job {
public:
    explicit LevelsetJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        path_ = p.count("path", 0, 0);
        z_ = read_level(p, cfg_.dim);
        tolerance_ = p.number("tolerance", 0.0);
        opt_.window = read_window(p, "window", opt_.window);
        opt_.section_step = static_cast<int>(p.integer("section_step", -1, -1, cfg_.grid.nt()));
        opt_.section_site = static_cast<int>(p.integer("section_site", -1, -1, cfg_.grid.nx));
        if (tolerance_ < 0.0) p.fail("tolerance", "must be >= 0 (0 picks the default)");
        p.finish();
    }

protected:
    void execute(const RunContext&, ReportBundle& out) const override {
        const auto model = build_model(cfg_);
        const auto traj = simulate(cfg_.grid, *model, cfg_.rng, path_);
        const double tol = tolerance_ > 0.0 ? tolerance_ : stats::default_level_tolerance(traj);
        const auto ls = stats::level_set(traj, z_, tol, opt_);
        const auto& g = cfg_.grid;
        Table nodes{"nodes", {"n", "m", "t", "x"}, {}, false};
        for (const auto& [n, m] : ls.nodes) nodes.add({std::int64_t{n}, std::int64_t{m}, g.t(n), g.x(m)});
        Table sec{"sections", {"set", "index", "coordinate"}, {}, false};
        for (int n : ls.time_projection) sec.add({std::string("T"), std::int64_t{n}, g.t(n)});
        for (int m : ls.space_projection) sec.add({std::string("X"), std::int64_t{m}, g.x(m)});
        for (int n : ls.fixed_x_section) sec.add({std::string("L_x"), std::int64_t{n}, g.t(n)});
        for (int m : ls.fixed_t_section) sec.add({std::string("L^t"), std::int64_t{m}, g.x(m)});
        const std::string ref = "level set {(t,x): u(t,x) = z} and its projections and sections";
        out.claims.push_back(info("levelset.nodes", ref, static_cast<double>(ls.nodes.size()), kNaN,
                                  "tolerance " + num(tol)));
        out.claims.push_back(info("levelset.T", ref, static_cast<double>(ls.time_projection.size())));
        out.claims.push_back(info("levelset.X", ref, static_cast<double>(ls.space_projection.size())));
        out.claims.push_back(info("levelset.L_x", ref, static_cast<double>(ls.fixed_x_section.size()), kNaN,
                                  "site " + std::to_string(ls.section_site)));
        out.claims.push_back(info("levelset.L^t", ref, static_cast<double>(ls.fixed_t_section.size()), kNaN,
                                  "step " + std::to_string(ls.section_step)));
        out.tables.push_back(std::move(nodes));
        out.tables.push_back(std::move(sec));
    }

private:
    std::size_t path_;
    std::vector<double> z_;
    double tolerance_;
    stats::LevelSetOptions opt_;
};

std::string dims_ref(stats::RandomSet which) {
    using stats::RandomSet;
    switch (which) {
        case RandomSet::range_tx: return "dimension of the range u((0,T] x (0,1))";
        case RandomSet::range_x: return "dimension of the fixed-time range u({t} x (0,1))";
        case RandomSet::range_t: return "dimension of the fixed-site range u((0,T] x {x})";
        case RandomSet::levelset_L: return "parabolic dimension of the level set L(z)";
        case RandomSet::levelset_T: return "dimension of the time projection of the level set";
        case RandomSet::levelset_X: return "dimension of the space projection of the level set";
        case RandomSet::levelset_Lx: return "dimension of the fixed-site level set L_x(z)";
        case RandomSet::levelset_Lt: return "dimension of the fixed-time level set L^t(z)";
    }
    return "";
}

class DimsJob : public Job {
public:
    explicit DimsJob(const ExperimentConfig& cfg) : Job(cfg) {
        const Fields p(cfg_.params, "/params");
        if (!p.has("which")) p.fail("which", "required: one of range_tx, range_x, range_t, levelset_L, levelset_T, "
                                              "levelset_X, levelset_Lx, levelset_Lt");
        try {
            which_ = stats::parse_random_set(p.text("which", ""));
        } catch (const ConfigError& e) {
            p.fail("which", e.what());
        }
        const auto pred = stats::predict(which_, cfg_.dim);
        if (!pred.covered)
            p.fail("which", "d = " + std::to_string(cfg_.dim) + " is outside the covered regime (" + pred.regime + ")");
        opt_.n_paths = p.count("n_paths", 10, 1);
        opt_.z = read_level(p, cfg_.dim);
        opt_.t = p.number("t", -1.0);
        opt_.x = p.number("x", 0.5);
        opt_.window = read_window(p, "window", opt_.window);
        opt_.scales = read_scales(p, "scales", stats::dyadic_scales(1, 10));
        opt_.trim = static_cast<int>(p.integer("trim", 2, 0, 100));
        opt_.tolerance_factor = p.number("tolerance_factor", 0.5);
        opt_.min_points = p.count("min_points", 100, 1);
        opt_.identity_tolerance = p.number("identity_tolerance", 0.3);
        opt_.direct_slice = p.boolean("direct_slice", false);
        opt_.direct_nx = static_cast<int>(p.integer("direct_nx", 0, 0, 1 << 24));
        tolerance_ = p.number("dimension_tolerance", 0.1);
        if (opt_.t > cfg_.grid.T + 1e-12) p.fail("t", "must not exceed T");
        if (!(opt_.x > 0.0 && opt_.x < 1.0)) p.fail("x", "must lie in (0, 1)");
        if (opt_.direct_slice && !build_model(cfg_)->is_additive())
            p.fail("direct_slice", "needs an additive model (constant sigma, zero drift)");
        p.finish();
    }
    std::vector<PathCount> path_counts() override { return {{&opt_.n_paths, 1}}; }

protected:
    void execute(const RunContext& ctx, ReportBundle& out) const override {
        auto opt = opt_;
        opt.threads = ctx.threads;
        const auto model = build_model(cfg_);
        const auto r = stats::dimension_report(cfg_.grid, *model, cfg_.rng, which_, opt);
        const std::string name = stats::to_string(which_);
        const std::string pre = "dims." + name + ".";
        Table t{"counts", {"scale", "count", "in_fit"}, {}, false};
        for (std::size_t k = 0; k < r.box.scales.size(); ++k) {
            const bool used = r.fitted && std::find(r.box.fit.scales.begin(), r.box.fit.scales.end(),
                                                    1.0 / r.box.scales[k]) != r.box.fit.scales.end();
            t.add({r.box.scales[k], r.box.counts[k], std::int64_t{used ? 1 : 0}});
        }
        const std::string pooled = std::to_string(r.paths_used) + " paths pooled, " + std::to_string(r.paths_empty) +
                                   " empty, " + std::to_string(r.paths_sparse) + " sparse";
        const double pred = r.prediction.dimension;
        if (r.fitted) {
            auto c = within(pre + "dimension", dims_ref(which_), r.measured, pred - tolerance_, pred + tolerance_, pred);
            c.detail = pooled;
            out.claims.push_back(std::move(c));
            auto id = within(pre + "identity", "dimension + codimension = ambient dimension", r.identity_sum,
                             r.prediction.ambient - opt.identity_tolerance, r.prediction.ambient + opt.identity_tolerance,
                             r.prediction.ambient);
            id.detail = "codimension " + num(r.prediction.codimension);
            out.claims.push_back(std::move(id));
        } else {
            out.claims.push_back(info(pre + "dimension", dims_ref(which_), kNaN, pred, r.note + "; " + pooled));
        }
        out.notes["regime"] = r.prediction.regime;
        out.tables.push_back(std::move(t));
    }

private:
    stats::RandomSet which_;
    stats::DimensionOptions opt_;
    double tolerance_;
};

using Factory = std::function<std::unique_ptr<Job>(const ExperimentConfig&)>;

template <class J>
Factory factory() {
    return [](const ExperimentConfig& c) { return std::unique_ptr<Job>(new J(c)); };
}

const std::vector<std::pair<std::string, Factory>>& registry() {
    static const std::vector<std::pair<std::string, Factory>> r{
        {"kernel-check", factory<KernelCheckJob>()}, {"simulate", factory<SimulateJob>()},
        {"holder", factory<HolderJob>()},            {"malliavin", factory<MalliavinJob>()},
        {"capacity", factory<CapacityJob>()},        {"hausdorff", factory<HausdorffJob>()},
        {"boxdim", factory<BoxdimJob>()},            {"density", factory<DensityJob>()},
        {"collapse", factory<CollapseJob>()},        {"hit", factory<HitJob>()},
        {"levelset", factory<LevelsetJob>()},        {"dims", factory<DimsJob>()},
        {"sandwich", factory<SandwichJob>()},
    };
    return r;
}

}  // namespace

std::vector<std::string> kinds() {
    std::vector<std::string> out;
    for (const auto& [name, f] : registry()) out.push_back(name);
    return out;
}

std::unique_ptr<Job> make_job(const ExperimentConfig& cfg) {
    for (const auto& [name, f] : registry())
        if (name == cfg.kind) {
            try {
                return f(cfg);
            } catch (const SchemaError& e) {
                throw SchemaError(cfg.source + ": " + e.what());
            }
        }
    throw SchemaError(cfg.source + ": /kind: unknown experiment kind '" + cfg.kind + "'");
}

void apply_paths_budget(const std::vector<Job*>& jobs, std::size_t budget) {
    std::vector<Job::PathCount> all;
    for (Job* j : jobs)
        for (const auto& pc : j->path_counts()) all.push_back(pc);
    std::size_t total = 0;
    for (const auto& pc : all) total += *pc.value;
    if (total <= budget || total == 0) return;
    const double f = static_cast<double>(budget) / static_cast<double>(total);
    for (const auto& pc : all)
        *pc.value = std::max(pc.minimum, static_cast<std::size_t>(std::floor(*pc.value * f)));
}

}  // namespace heatprobe::app
