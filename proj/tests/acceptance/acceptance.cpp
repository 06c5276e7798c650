// Acceptance run: one line per criterion, exit status 1 if any fails.
//
//   acceptance            all criteria
//   acceptance 3 11       a subset
//
// Every criterion goes through the same experiment jobs as the CLI. The
// thresholds below are pinned here and applied to the measured values, not
// to the verdicts the jobs attach.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "app/app.hpp"
#include "heatprobe/parallel.hpp"

namespace app = heatprobe::app;
using app::Json;

namespace {

// criterion 1
constexpr double kMassTol = 1e-8;
constexpr double kSemigroupTol = 1e-6;
constexpr double kAgreementTol = 1e-10;
// criterion 2
constexpr double kLocalLowerMin = 0.3;
constexpr double kL2qSpreadMax = 0.10;
constexpr double kWindowRatioMax = 1.0;
// criterion 3
constexpr double kVarianceSE = 3.0;
constexpr double kKdeSupFraction = 0.05;
// criterion 4
constexpr double kTimeSlope = 0.5, kTimeSlopeTol = 0.1;
constexpr double kSpaceSlope = 1.0, kSpaceSlopeTol = 0.15;
// criterion 5
constexpr double kBumpConstantTol = 1e-10;
constexpr double kBumpModelTol = 0.05;
// criterion 6
constexpr double kGammaRelTol = 0.03;
// criterion 7
constexpr double kBloc4Lo = 0.85, kBloc4Hi = 1.15;
constexpr double kBloc23Lo = 0.35, kBloc23Hi = 0.65;
constexpr double kBloc1Lo = -0.1, kBloc1Hi = 0.1;
// criterion 8
constexpr double kLambdaLo = 0.8, kLambdaHi = 1.2;
constexpr double kTopdLo = -0.15, kTopdHi = 0.15;
// criterion 9
constexpr double kHalvingTol = 0.10;
constexpr double kTwoAtomTol = 1e-4;
constexpr double kGapTol = 1e-6;
// criterion 10
constexpr double kUnitLo = 0.9, kUnitHi = 1.1;
// criterion 11
constexpr double kLtDim = 0.5, kLtTol = 0.1;
constexpr double kLxDim = 0.75, kLxTol = 0.1;
constexpr double kRangeDim = 2.0, kRangeTol = 0.25;
constexpr double kIdentityTol = 0.3;
// criterion 13
constexpr double kFlatRatio = 0.5;

constexpr std::uint64_t kSeed = 2024;

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [FAIL]");
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

int threads() { return heatprobe::resolve_threads(0); }

/// Runs an inline config through the job machinery; results are cached so
/// criteria sharing a config share the run.
const app::ReportBundle& run(const std::string& text, int n_threads = 0) {
    static std::map<std::string, app::ReportBundle> cache;
    const std::string key = text + "#" + std::to_string(n_threads);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    Json doc = app::parse_json(text, "<acceptance>");
    doc["rng"] = {{"seed", kSeed}};
    const auto cfg = app::config_from_json(doc, "<acceptance>");
    const auto job = app::make_job(cfg);
    return cache[key] = job->run(app::RunContext{n_threads > 0 ? n_threads : threads()});
}

double measured(const app::ReportBundle& b, const std::string& id) {
    const auto* c = b.claim(id);
    if (!c) throw std::runtime_error(b.id + ": missing claim " + id);
    return c->measured;
}

double cell(const app::Table& t, std::size_t row, const std::string& column) {
    for (std::size_t j = 0; j < t.columns.size(); ++j)
        if (t.columns[j] == column) {
            const auto& v = t.rows.at(row)[j];
            if (const auto* d = std::get_if<double>(&v)) return *d;
            if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
        }
    throw std::runtime_error(t.name + ": no numeric column " + column);
}

bool in(double v, double lo, double hi) { return v >= lo && v <= hi; }

// ---------------------------------------------------------------- configs

const char* kKernelNeumann = R"({"kind": "kernel-check", "id": "kernel-neumann",
    "grid": {"boundary": "neumann"}, "params": {"n_t": 50, "n_xy": 100}})";
const char* kKernelDirichlet = R"({"kind": "kernel-check", "id": "kernel-dirichlet",
    "grid": {"boundary": "dirichlet"}, "params": {"n_t": 50, "n_xy": 100, "small_time": false}})";

const char* kLinearOracle = R"({"kind": "density", "id": "linear-oracle",
    "grid": {"nx": 64, "T": 0.3}, "model": {"name": "linear-test", "dim": 1},
    "params": {"mode": "linear_oracle", "x": 0.5, "variance_paths": 2000, "samples": 10000}})";

const char* kHolder = R"({"kind": "holder", "id": "holder",
    "grid": {"nx": 64, "T": 0.25}, "model": {"name": "bounded-smooth", "dim": 1},
    "params": {"paths": 500, "p": 2, "x": 0.5}})";

const char* kBump = R"({"kind": "malliavin", "id": "bump",
    "grid": {"nx": 32, "T": 0.1}, "model": {"name": "bounded-smooth", "dim": 2},
    "params": {"mode": "bump", "paths": 4, "h": 1e-5}})";

const char* kGamma = R"({"kind": "malliavin", "id": "gamma",
    "grid": {"nx": 32, "T": 0.3}, "model": {"name": "bounded-smooth", "dim": 2},
    "params": {"mode": "linear_gamma", "paths": 8, "x": 0.5, "nodes": 64}})";

const char* kScaling = R"({"kind": "malliavin", "id": "scaling",
    "grid": {"nx": 128, "T": 0.5}, "model": {"name": "bounded-smooth", "dim": 2},
    "params": {"mode": "scaling", "paths": 200, "anchors": "t=0.5,x=0.5,k=2:6,families=space+mixed"}})";

const char* kCapacity = R"({"kind": "capacity", "id": "capacity", "params": {"mode": "checks", "pairs": 50}})";
const char* kHausdorff = R"({"kind": "hausdorff", "id": "hausdorff", "params": {"mode": "checks"}})";

const char* kLevelLt = R"({"kind": "dims", "id": "levelset-Lt",
    "grid": {"nx": 64, "T": 0.5}, "model": {"name": "linear-test", "dim": 1},
    "params": {"which": "levelset_Lt", "n_paths": 40, "t": 0.5, "direct_slice": true, "direct_nx": 262144,
               "scales": {"k0": 2, "k1": 16, "step": 1}, "tolerance_factor": 0.5,
               "dimension_tolerance": 0.1}})";
const char* kLevelLx = R"({"kind": "dims", "id": "levelset-Lx",
    "grid": {"nx": 128, "T": 2.0}, "model": {"name": "bounded-smooth", "dim": 1},
    "params": {"which": "levelset_Lx", "n_paths": 16, "x": 0.5, "window": {"t0": 0.5, "t1": 2.0},
               "scales": {"k0": 1, "k1": 12, "step": 1}, "dimension_tolerance": 0.1}})";
const char* kRange = R"({"kind": "dims", "id": "range-x",
    "grid": {"nx": 64, "T": 0.5}, "model": {"name": "linear-test", "dim": 3},
    "params": {"which": "range_x", "n_paths": 6, "t": 0.5, "direct_slice": true, "direct_nx": 262144,
               "scales": {"k0": 3, "k1": 7.5, "step": 0.5}, "dimension_tolerance": 0.25}})";

const char* kSandwich = R"({"kind": "sandwich", "id": "sandwich",
    "grid": {"nx": 64, "T": 0.5}, "model": {"name": "bounded-smooth", "dim": 1},
    "params": {"variant": "space_time", "paths": 1000, "radii": [0.05, 0.1, 0.2, 0.4],
               "window": {"t0": 0.25, "t1": 0.5, "x0": 0.25, "x1": 0.75}}})";

// ---------------------------------------------------------------- criteria

Outcome kernel_identities() {
    Outcome o;
    const auto& n = run(kKernelNeumann);
    const auto& d = run(kKernelDirichlet);
    o.check(measured(n, "kernel.mass") <= kMassTol, "mass " + fmt(measured(n, "kernel.mass")));
    const double semi = std::max(measured(n, "kernel.semigroup"), measured(d, "kernel.semigroup"));
    o.check(semi <= kSemigroupTol, "semigroup " + fmt(semi));
    const double agree = std::max(measured(n, "kernel.dual_agreement"), measured(d, "kernel.dual_agreement"));
    o.check(agree <= kAgreementTol, "dual agreement " + fmt(agree));
    const double pos = std::min(measured(n, "kernel.positivity"), measured(d, "kernel.positivity"));
    o.check(pos > 0.0, "min positive " + fmt(pos));
    // the verdict also covers nonnegativity of every lattice value
    const bool nonneg = n.claim("kernel.positivity")->verdict == app::Verdict::pass &&
                        d.claim("kernel.positivity")->verdict == app::Verdict::pass;
    o.check(nonneg, "nonnegative");
    o.check(measured(n, "kernel.symmetry") == 0.0 && measured(d, "kernel.symmetry") == 0.0, "symmetric");
    return o;
}

Outcome small_time_estimates() {
    Outcome o;
    const auto& n = run(kKernelNeumann);
    const double lower = measured(n, "kernel.local_l2_lower");
    o.check(lower >= kLocalLowerMin, "local lower " + fmt(lower));
    const double spread = measured(n, "kernel.l2q_stability");
    o.check(spread <= kL2qSpreadMax, "l2q spread " + fmt(spread));
    const double window = measured(n, "kernel.l2_window");
    o.check(window <= kWindowRatioMax, "window ratio " + fmt(window));
    return o;
}

Outcome linear_oracle() {
    Outcome o;
    const auto& b = run(kLinearOracle);
    const auto* v = b.table("variance");
    const double var = cell(*v, 0, "variance"), se = cell(*v, 0, "stderr"), oracle = cell(*v, 0, "oracle");
    o.check(std::abs(var - oracle) <= kVarianceSE * se,
            "variance " + fmt(var) + " vs " + fmt(oracle) + " (" + fmt(std::abs(var - oracle) / se) + " SE)");
    const auto* k = b.table("kde");
    double sup = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < k->rows.size(); ++i) {
        sup = std::max(sup, std::abs(cell(*k, i, "kde") - cell(*k, i, "exact")));
        peak = std::max(peak, cell(*k, i, "kde"));
    }
    o.check(sup <= kKdeSupFraction * peak, "KDE sup " + fmt(sup / peak) + " x peak");
    return o;
}

Outcome holder_slopes() {
    Outcome o;
    const auto& b = run(kHolder);
    const double ts = measured(b, "holder.time_slope"), ss = measured(b, "holder.space_slope");
    o.check(std::abs(ts - kTimeSlope) <= kTimeSlopeTol, "time slope " + fmt(ts));
    o.check(std::abs(ss - kSpaceSlope) <= kSpaceSlopeTol, "space slope " + fmt(ss));
    return o;
}

Outcome bump_oracle() {
    Outcome o;
    const auto& b = run(kBump);
    const double c = measured(b, "malliavin.bump_constant"), m = measured(b, "malliavin.bump_model");
    o.check(c <= kBumpConstantTol, "constant sigma " + fmt(c));
    o.check(m <= kBumpModelTol, "bounded-smooth " + fmt(m));
    return o;
}

Outcome gamma_oracle() {
    Outcome o;
    const auto& b = run(kGamma);
    const double e = measured(b, "malliavin.gamma_linear");
    o.check(e <= kGammaRelTol, "linear gamma rel " + fmt(e));
    const double non_psd = measured(b, "malliavin.gamma_psd");
    o.check(non_psd == 0.0, "non-PSD " + fmt(non_psd));
    return o;
}

Outcome bloc_scaling() {
    Outcome o;
    const auto& b = run(kScaling);
    for (const char* f : {"space", "mixed"}) {
        const std::string pre = std::string("malliavin.") + f + ".";
        const double b1 = measured(b, pre + "bloc1"), b23 = measured(b, pre + "bloc23"), b4 = measured(b, pre + "bloc4");
        o.check(in(b4, kBloc4Lo, kBloc4Hi), std::string(f) + " bloc4 " + fmt(b4));
        o.check(in(b23, kBloc23Lo, kBloc23Hi), std::string(f) + " bloc23 " + fmt(b23));
        o.check(in(b1, kBloc1Lo, kBloc1Hi), std::string(f) + " bloc1 " + fmt(b1));
    }
    return o;
}

Outcome eigen_scaling() {
    Outcome o;
    const auto& b = run(kScaling);
    const double lam = measured(b, "malliavin.mixed.lambda_min"), topd = measured(b, "malliavin.mixed.topd");
    o.check(in(lam, kLambdaLo, kLambdaHi), "lambda_min " + fmt(lam));
    o.check(in(topd, kTopdLo, kTopdHi), "top-d " + fmt(topd));
    const double same = measured(b, "malliavin.same_time.lambda_min");
    o.check(in(same, kLambdaLo, kLambdaHi), "s=t lambda_min " + fmt(same));
    return o;
}

Outcome capacity_checks() {
    Outcome o;
    const auto& b = run(kCapacity);
    const double neg = measured(b, "capacity.negative_index");
    o.check(neg == 0.0, "beta<0 |Cap-1| " + fmt(neg));
    const double half = measured(b, "capacity.singleton_halving");
    o.check(std::abs(half - 0.5) <= kHalvingTol * 0.5, "halving ratio " + fmt(half));
    const double two = measured(b, "capacity.two_atom");
    o.check(two <= kTwoAtomTol, "two-atom " + fmt(two));
    const double gap = measured(b, "capacity.duality_gap");
    o.check(gap <= kGapTol, "gap " + fmt(gap));
    const double viol = measured(b, "capacity.monotone");
    o.check(viol == 0.0, "monotone violations " + fmt(viol));
    return o;
}

Outcome hausdorff_checks() {
    Outcome o;
    const auto& b = run(kHausdorff);
    const auto* t = b.table("checks");
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < t->rows.size(); ++i)
        if (std::get<std::string>(t->rows[i][0]) == "unit_interval") {
            lo = std::min(lo, cell(*t, i, "value"));
            hi = std::max(hi, cell(*t, i, "value"));
        }
    o.check(lo >= kUnitLo && hi <= kUnitHi, "unit interval in [" + fmt(lo) + ", " + fmt(hi) + "]");
    o.check(measured(b, "hausdorff.below_dimension") == 1.0, "beta=0.8 increasing");
    o.check(measured(b, "hausdorff.above_dimension") == 1.0, "beta=1.2 decreasing");
    o.check(std::isinf(measured(b, "hausdorff.negative_index")), "beta<0 infinite");
    return o;
}

Outcome dimensions() {
    Outcome o;
    struct Case {
        const char* config;
        const char* which;
        double dim, tol;
    };
    for (const Case& c : {Case{kLevelLt, "levelset_Lt", kLtDim, kLtTol}, Case{kLevelLx, "levelset_Lx", kLxDim, kLxTol},
                          Case{kRange, "range_x", kRangeDim, kRangeTol}}) {
        const auto& b = run(c.config);
        const std::string pre = std::string("dims.") + c.which + ".";
        const double dim = measured(b, pre + "dimension");
        o.check(std::abs(dim - c.dim) <= c.tol, std::string(c.which) + " " + fmt(dim));
        const auto* id = b.claim(pre + "identity");
        const double sum = id ? id->measured : NAN;
        const double ambient = id ? id->predicted : NAN;
        o.check(id && std::abs(sum - ambient) <= kIdentityTol, "identity " + fmt(sum));
    }
    return o;
}

Outcome nonpolarity() {
    Outcome o;
    const auto& b = run(kSandwich);
    const auto* t = b.table("rows");
    for (std::size_t i = 0; i < t->rows.size(); ++i)
        if (cell(*t, i, "radius") == 0.05) {
            const double lo = cell(*t, i, "ci_lo");
            o.check(lo > 0.0, "ball(0,0.05): " + fmt(cell(*t, i, "hits")) + "/" + fmt(cell(*t, i, "paths")) +
                                  ", Wilson lower " + fmt(lo));
            return o;
        }
    o.check(false, "radius 0.05 missing");
    return o;
}

Outcome sandwich_flat() {
    Outcome o;
    const auto& b = run(kSandwich);
    const auto* t = b.table("rows");
    double mn = INFINITY, mx = 0.0;
    for (std::size_t i = 0; i < t->rows.size(); ++i) {
        mn = std::min(mn, cell(*t, i, "estimate"));
        mx = std::max(mx, cell(*t, i, "estimate"));
    }
    o.check(mn >= kFlatRatio * mx, "min/max " + fmt(mn / mx));
    return o;
}

Outcome determinism() {
    Outcome o;
    for (const char* config : {kSandwich, kBump, kLevelLx}) {
        const int other = threads() == 1 ? 4 : 1;
        const auto& a = run(config);
        const auto& b = run(config, other);
        bool same = a.tables.size() == b.tables.size();
        for (std::size_t k = 0; same && k < a.tables.size(); ++k) same = app::to_csv(a.tables[k]) == app::to_csv(b.tables[k]);
        app::Provenance prov;
        prov.seed = kSeed;
        same = same && app::summary_json(a, prov).dump() == app::summary_json(b, prov).dump();
        o.check(same, a.id + " " + std::to_string(threads()) + " vs " + std::to_string(other) + " threads");
    }
    return o;
}

struct Criterion {
    int number;
    const char* name;
    std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "kernel identities", kernel_identities},
        {2, "small-time estimates", small_time_estimates},
        {3, "linear Gaussian oracle", linear_oracle},
        {4, "Holder slopes", holder_slopes},
        {5, "Malliavin bump oracle", bump_oracle},
        {6, "Malliavin matrix oracle", gamma_oracle},
        {7, "bloc scaling", bloc_scaling},
        {8, "eigen scaling", eigen_scaling},
        {9, "capacity", capacity_checks},
        {10, "Hausdorff covers", hausdorff_checks},
        {11, "dimension predictions", dimensions},
        {12, "nonpolarity", nonpolarity},
        {13, "sandwich flatness", sandwich_flat},
        {14, "determinism", determinism},
    };
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!pick.empty() && !pick.count(c.number)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.fn();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("error: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += out.pass ? 0 : 1;
        std::printf("criterion %2d  %-24s %s  (%.1f s)  %s\n", c.number, c.name, out.pass ? "PASS" : "FAIL", secs,
                    out.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed ? 1 : 0;
}
