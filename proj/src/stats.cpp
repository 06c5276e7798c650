#include "heatprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "heatprobe/error.hpp"
#include "heatprobe/parallel.hpp"

namespace heatprobe::stats {

namespace {

constexpr double kKernelReach = 8.0;  // bandwidths beyond which a sample is ignored

std::vector<double> column(std::span<const double> samples, int dim, int axis) {
    const std::size_t n = samples.size() / dim;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = samples[i * dim + axis];
    return out;
}

// Samples ordered by axis 0 (index breaks ties) so a window of kernel reach
// can be found by binary search; sums then run in this fixed order.
struct SortedSamples {
    int dim = 1;
    std::vector<double> coords;  // [sample][axis] in sorted order
    std::vector<double> axis0;

    SortedSamples(std::span<const double> samples, int d) : dim(d) {
        const std::size_t n = samples.size() / d;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return samples[a * d] < samples[b * d];
        });
        coords.reserve(samples.size());
        for (std::size_t i : idx)
            for (int j = 0; j < d; ++j) coords.push_back(samples[i * d + j]);
        axis0 = column(coords, d, 0);
    }

    std::size_t size() const { return axis0.size(); }

    // sum_i prod_j phi((p_j - s_ij) / h_j), unnormalized
    double kernel_sum(const double* p, std::span<const double> h) const {
        const double reach = kKernelReach * h[0];
        const auto first = std::lower_bound(axis0.begin(), axis0.end(), p[0] - reach);
        const auto last = std::upper_bound(first, axis0.end(), p[0] + reach);
        double sum = 0.0;
        for (auto it = first; it != last; ++it) {
            const std::size_t i = static_cast<std::size_t>(it - axis0.begin());
            double q = 0.0;
            bool inside = true;
            for (int j = 0; j < dim; ++j) {
                const double u = (p[j] - coords[i * dim + j]) / h[j];
                if (std::abs(u) > kKernelReach) {
                    inside = false;
                    break;
                }
                q += u * u;
            }
            if (inside) sum += std::exp(-0.5 * q);
        }
        return sum;
    }
};

double kernel_norm(std::span<const double> h, std::size_t n) {
    double prod = static_cast<double>(n);
    for (double v : h) prod *= v * std::sqrt(2.0 * std::numbers::pi);
    return prod;
}

// Nodes of [lo, hi] on a lattice with spacing `step`; a degenerate window
// maps to the nearest node.
std::vector<int> window_nodes(double lo, double hi, double step, int last) {
    std::vector<int> out;
    if (lo == hi) {
        const int k = static_cast<int>(std::llround(lo / step));
        if (k >= 0 && k <= last) out.push_back(k);
        return out;
    }
    const int a = std::max(0, static_cast<int>(std::ceil(lo / step - 1e-9)));
    const double top = std::min(hi / step + 1e-9, static_cast<double>(last));
    const int b = static_cast<int>(std::floor(top));
    for (int k = a; k <= b; ++k) out.push_back(k);
    return out;
}

double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

std::vector<double> level_or_zero(const std::vector<double>& z, int d) {
    if (z.empty()) return std::vector<double>(d, 0.0);
    if (static_cast<int>(z.size()) != d) throw ContractError("level z has the wrong dimension");
    return z;
}

double log_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    for (double y : ys)
        if (!(y > 0.0) || !std::isfinite(y)) return std::numeric_limits<double>::quiet_NaN();
    return fit_power_law(xs, ys).exponent;
}

}  // namespace

// ---------------------------------------------------------------- densities

std::size_t EvalGrid::size() const {
    std::size_t n = 1;
    for (int c : count) n *= static_cast<std::size_t>(c);
    return count.empty() ? 0 : n;
}

void EvalGrid::point(std::size_t k, std::span<double> out) const {
    for (int j = dim() - 1; j >= 0; --j) {
        const std::size_t c = static_cast<std::size_t>(count[j]);
        out[j] = lo[j] + static_cast<double>(k % c) * step(j);
        k /= c;
    }
}

double EvalGrid::weight(std::size_t k) const {
    double w = 1.0;
    for (int j = dim() - 1; j >= 0; --j) {
        const std::size_t c = static_cast<std::size_t>(count[j]);
        const std::size_t i = k % c;
        w *= step(j) * ((i == 0 || i + 1 == c) ? 0.5 : 1.0);
        k /= c;
    }
    return w;
}

std::vector<double> silverman_bandwidth(std::span<const double> samples, int dim) {
    if (dim < 1 || samples.size() % dim != 0) throw ContractError("samples do not match dim");
    const std::size_t n = samples.size() / dim;
    if (n < 2) throw ContractError("bandwidth needs at least two samples");
    const double factor = std::pow(4.0 / ((dim + 2.0) * n), 1.0 / (dim + 4.0));
    std::vector<double> h(dim);
    for (int j = 0; j < dim; ++j) {
        const double sd = std::sqrt(summarize(column(samples, dim, j)).variance);
        if (!(sd > 0.0)) throw ContractError("samples are degenerate along an axis");
        h[j] = sd * factor;
    }
    return h;
}

EvalGrid auto_grid(std::span<const double> samples, int dim, std::span<const double> bandwidth,
                   int points_per_axis, double pad) {
    if (dim < 1 || dim > 3) throw ContractError("gridded evaluation needs 1 <= dim <= 3");
    if (samples.empty()) throw ContractError("no samples");
    if (static_cast<int>(bandwidth.size()) != dim) throw ContractError("one bandwidth per axis");
    const int pts = points_per_axis > 0 ? points_per_axis : (dim == 1 ? 401 : dim == 2 ? 121 : 41);
    EvalGrid g;
    for (int j = 0; j < dim; ++j) {
        const auto col = column(samples, dim, j);
        const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
        g.lo.push_back(*mn - pad * bandwidth[j]);
        g.hi.push_back(*mx + pad * bandwidth[j]);
        g.count.push_back(pts);
    }
    return g;
}

double KdeEstimate::peak() const { return values.empty() ? 0.0 : values[argmax()]; }

std::size_t KdeEstimate::argmax() const {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                    values.begin());
}

KdeEstimate kde_density(std::span<const double> samples, int dim, const EvalGrid& grid,
                        std::span<const double> bandwidth, int threads) {
    if (samples.empty()) throw ContractError("kde_density: empty samples");
    if (dim < 1 || dim > 3) throw ContractError("gridded evaluation needs 1 <= dim <= 3");
    if (samples.size() % dim != 0) throw ContractError("samples do not match dim");
    const std::size_t n = samples.size() / dim;
    if (n < 500) throw ContractError("kde_density needs at least 500 samples");
    if (grid.dim() != dim) throw ContractError("evaluation grid has the wrong dimension");
    for (int c : grid.count)
        if (c < 2) throw ContractError("evaluation grid needs two nodes per axis");

    KdeEstimate est;
    est.dim = dim;
    est.grid = grid;
    est.n_samples = n;
    est.bandwidth = bandwidth.empty() ? silverman_bandwidth(samples, dim)
                                      : std::vector<double>(bandwidth.begin(), bandwidth.end());
    if (static_cast<int>(est.bandwidth.size()) != dim) throw ContractError("one bandwidth per axis");
    for (double h : est.bandwidth)
        if (!(h > 0.0)) throw ContractError("bandwidths must be positive");

    const SortedSamples sorted(samples, dim);
    const double norm = kernel_norm(est.bandwidth, n);
    est.values.assign(grid.size(), 0.0);
    parallel_for(grid.size(), threads, [&](std::size_t k) {
        double p[3];
        grid.point(k, {p, static_cast<std::size_t>(dim)});
        est.values[k] = sorted.kernel_sum(p, est.bandwidth) / norm;
    });
    std::vector<double> weighted(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) weighted[k] = grid.weight(k) * est.values[k];
    est.mass = pairwise_sum(weighted);
    if (!(est.mass >= 0.99 && est.mass <= 1.01)) {
        std::ostringstream msg;
        msg << "KDE mass " << est.mass << " on the evaluation grid lies outside [0.99, 1.01]";
        throw ContractError(msg.str());
    }
    return est;
}

KdeEstimate kde_density(std::span<const double> samples, int dim, int threads) {
    if (samples.empty()) throw ContractError("kde_density: empty samples");
    const auto h = silverman_bandwidth(samples, dim);
    return kde_density(samples, dim, auto_grid(samples, dim, h), h, threads);
}

double fit_lower_envelope(const KdeEstimate& kde, double t, double floor_fraction, double c_max) {
    if (!(t > 0.0)) throw ContractError("envelope time must be positive");
    const double floor = floor_fraction * kde.peak();
    const int d = kde.dim;
    std::vector<std::pair<double, double>> nodes;  // (|z|^2, value)
    double p[3];
    for (std::size_t k = 0; k < kde.values.size(); ++k) {
        if (kde.values[k] < floor || !(kde.values[k] > 0.0)) continue;
        kde.grid.point(k, {p, static_cast<std::size_t>(d)});
        double r2 = 0.0;
        for (int j = 0; j < d; ++j) r2 += p[j] * p[j];
        nodes.emplace_back(r2, kde.values[k]);
    }
    if (nodes.empty()) return 0.0;
    const double pre = std::pow(t, -d / 4.0);
    const double root_t = std::sqrt(t);
    const auto holds = [&](double c) {
        for (const auto& [r2, v] : nodes)
            if (c * pre * std::exp(-r2 / (c * root_t)) > v) return false;
        return true;
    };
    if (holds(c_max)) return c_max;
    double lo = 1e-12, hi = c_max;
    if (!holds(lo)) return 0.0;
    for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-12; ++it) {
        const double mid = std::sqrt(lo * hi);
        (holds(mid) ? lo : hi) = mid;
    }
    return lo;
}

namespace {

double kde_at(const SortedSamples& s, std::span<const double> h, const double* p) {
    return s.kernel_sum(p, h) / kernel_norm(h, s.size());
}

}  // namespace

DensityBoundReport density_bound_check(const GridSpec& grid, const CoefficientModel& model,
                                       const RngSpec& rng, const DensityBoundOptions& opt) {
    if (!(model.ellipticity_rho > 0.0))
        throw ContractError("density bounds need an elliptic model (rho > 0)");
    if (opt.t_list.empty() || opt.x_list.empty()) throw ContractError("no (t, x) sites given");
    grid.validate();
    const int d = model.dim();
    std::vector<Observable> obs;
    for (double t : opt.t_list)
        for (double x : opt.x_list) {
            if (!(t > 0.0) || t > grid.T + 1e-12 || !(x > 0.0) || !(x < 1.0))
                throw ContractError("density sites must be interior");
            for (int i = 0; i < d; ++i)
                obs.push_back(Observable::point(grid.step_of(t), grid.site_of(x), i));
        }
    const auto ens = ensemble_run(grid, model, rng, opt.n_samples, obs, opt.threads);
    const std::size_t width = obs.size();

    DensityBoundReport rep;
    std::size_t site = 0;
    for (double t : opt.t_list)
        for (double x : opt.x_list) {
            std::vector<double> samples(opt.n_samples * d);
            for (std::size_t p = 0; p < opt.n_samples; ++p)
                for (int i = 0; i < d; ++i)
                    samples[p * d + i] = ens.samples[p * width + site * d + i];
            const auto kde = kde_density(samples, d, opt.threads);
            DensitySite s;
            s.t = grid.t(grid.step_of(t));
            s.x = grid.x(grid.site_of(x));
            s.peak = kde.peak();
            double var = 0.0;
            std::vector<double> centre(d);
            for (int i = 0; i < d; ++i) {
                const auto sum = summarize(column(samples, d, i));
                var += sum.variance / d;
                centre[i] = sum.mean;
            }
            s.sample_sd = std::sqrt(var);
            s.c_fit = fit_lower_envelope(kde, s.t, opt.fit_floor);
            centre[0] += 6.0 * s.sample_sd;
            s.tail_ratio = kde_at(SortedSamples(samples, d), kde.bandwidth, centre.data()) / s.peak;
            rep.sites.push_back(s);
            ++site;
        }
    rep.max_peak = rep.sites.front().peak;
    rep.min_peak = rep.sites.front().peak;
    rep.c_lower = rep.sites.front().c_fit;
    for (const auto& s : rep.sites) {
        rep.max_peak = std::max(rep.max_peak, s.peak);
        rep.min_peak = std::min(rep.min_peak, s.peak);
        rep.c_lower = std::min(rep.c_lower, s.c_fit);
    }
    rep.spread = (rep.max_peak - rep.min_peak) / rep.min_peak;
    rep.bounded = rep.spread < opt.spread_limit;
    rep.lower_ok = rep.c_lower >= opt.c_margin;
    return rep;
}

CollapseReport increment_collapse(const GridSpec& grid, const CoefficientModel& model,
                                  const RngSpec& rng, const CollapseOptions& opt) {
    grid.validate();
    if (opt.offsets.size() < 2) throw ContractError("collapse needs at least two offsets");
    for (double o : opt.offsets)
        if (!(o > 0.0)) throw ContractError("collapse offsets must be positive (x = y is excluded)");
    const auto [omin, omax] = std::minmax_element(opt.offsets.begin(), opt.offsets.end());
    const double span = std::log10(*omax / *omin);
    if (span < 1.5 - 1e-9) throw ContractError("collapse offsets must span at least 1.5 decades");
    if (!(opt.t > 0.0) || opt.t > grid.T + 1e-12 || !(opt.x > 0.0) || !(opt.x < 1.0))
        throw ContractError("collapse anchor must be interior");

    const int d = model.dim();
    const int n = grid.step_of(opt.t);
    const int m = grid.site_of(opt.x);
    std::vector<Observable> obs;
    CollapseReport rep;
    rep.span_decades = span;
    for (double o : opt.offsets) {
        const int m1 = grid.site_of(opt.x + o);
        if (m1 <= m) throw ContractError("offset rounds to zero on the grid");
        if (m1 > grid.nx) throw ContractError("offset leaves the grid");
        int n0 = n;
        if (opt.mode == CollapseMode::mixed) {
            n0 = n - grid.step_of(o * o);
            if (n0 == n) throw ContractError("time lag rounds to zero on the grid");
            if (n0 < 0) throw ContractError("time lag leaves the grid");
        }
        CollapseScale sc;
        sc.offset = o;
        sc.delta = std::sqrt((n - n0) * grid.dt) + (m1 - m) * grid.dx();
        rep.scales.push_back(sc);
        for (int i = 0; i < d; ++i) obs.push_back(Observable::increment(n, m1, n0, m, i));
    }
    const auto ens = ensemble_run(grid, model, rng, opt.n_samples, obs, opt.threads);
    const std::size_t width = obs.size();
    std::vector<double> deltas, sups;
    for (std::size_t k = 0; k < rep.scales.size(); ++k) {
        auto& sc = rep.scales[k];
        const double scale = 1.0 / std::sqrt(sc.delta);
        std::vector<double> samples(opt.n_samples * d);
        for (std::size_t p = 0; p < opt.n_samples; ++p)
            for (int i = 0; i < d; ++i)
                samples[p * d + i] = ens.samples[p * width + k * d + i] * scale;
        double var = 0.0;
        for (int i = 0; i < d; ++i) var += summarize(column(samples, d, i)).variance / d;
        sc.rescaled_variance = var;
        sc.sup_density = kde_density(samples, d, opt.threads).peak();
        deltas.push_back(sc.delta);
        sups.push_back(sc.sup_density);
    }
    const auto [smin, smax] = std::minmax_element(sups.begin(), sups.end());
    rep.ratio = *smax / *smin;
    rep.collapsed = rep.ratio <= opt.ratio_limit;
    if (deltas.size() >= 3) rep.sup_fit = fit_power_law(deltas, sups);
    return rep;
}

// ---------------------------------------------------------------- hitting

Target Target::ball(std::vector<double> centre, double radius) {
    if (!(radius >= 0.0)) throw ContractError("ball radius must be >= 0");
    Target t;
    t.kind = Kind::ball;
    t.centre = std::move(centre);
    t.radius = radius;
    return t;
}

Target Target::box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size() || lo.empty()) throw ContractError("box corners do not match");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (!(lo[i] <= hi[i])) throw ContractError("box has lo > hi");
    Target t;
    t.kind = Kind::box;
    t.lo = std::move(lo);
    t.hi = std::move(hi);
    return t;
}

int Target::dim() const {
    return static_cast<int>(kind == Kind::ball ? centre.size() : lo.size());
}

bool Target::contains(const double* u) const {
    const int d = dim();
    if (kind == Kind::ball) return sq_dist(u, centre.data(), d) <= radius * radius;
    for (int i = 0; i < d; ++i)
        if (u[i] < lo[i] || u[i] > hi[i]) return false;
    return true;
}

double Target::inner_size() const {
    if (kind == Kind::ball) return radius;
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lo.size(); ++i) s = std::min(s, 0.5 * (hi[i] - lo[i]));
    return s;
}

std::string Target::describe() const {
    std::ostringstream out;
    const auto vec = [&](const std::vector<double>& v) {
        out << "(";
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ";" : "") << v[i];
        out << ")";
    };
    if (kind == Kind::ball) {
        out << "ball";
        vec(centre);
        out << " r=" << radius;
    } else {
        out << "box";
        vec(lo);
        vec(hi);
    }
    return out.str();
}

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
    if (n == 0) throw ContractError("Wilson interval needs n >= 1");
    if (k > n) throw ContractError("more successes than trials");
    const double nn = static_cast<double>(n);
    const double p = k / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    Interval ci{std::max(0.0, centre - half), std::min(1.0, centre + half)};
    if (k == 0) ci.lo = 0.0;
    if (k == n) ci.hi = 1.0;
    return ci;
}

std::vector<HitReport> hit_probability(const GridSpec& grid, const CoefficientModel& model,
                                       const RngSpec& rng, std::size_t n_paths,
                                       const HitWindow& w, std::span<const Target> targets,
                                       int threads) {
    grid.validate();
    if (n_paths < 1) throw ContractError("hit_probability needs n_paths >= 1");
    if (targets.empty()) throw ContractError("no targets given");
    const int d = model.dim();
    for (const auto& t : targets)
        if (t.dim() != d) throw ContractError("target dimension does not match the model");
    if (!(w.t0 > 0.0) || w.t1 > grid.T + 1e-12 || w.t0 > w.t1)
        throw ContractError("time window must lie in (0, T]");
    if (!(w.x0 > 0.0) || !(w.x1 < 1.0) || w.x0 > w.x1)
        throw ContractError("space window must lie in (0, 1)");
    const auto steps = window_nodes(w.t0, w.t1, grid.dt, grid.nt());
    const auto sites = window_nodes(w.x0, w.x1, grid.dx(), grid.nx);
    if (steps.empty() || sites.empty()) throw ContractError("window holds no grid nodes");
    const int first = steps.front(), last = steps.back();
    const std::size_t nt = targets.size();

    auto rows = map_paths(n_paths, threads, [&](std::uint64_t path) {
        std::vector<double> row(nt + 4, 0.0);  // hit flags, then space/time sums and counts
        std::vector<double> prev;
        std::size_t open = nt;
        run_path(grid, model, rng, path, [&](int n, std::span<const double> s) {
            if (n >= first) {
                for (int m : sites) {
                    const double* u = &s[m * d];
                    for (std::size_t k = 0; k < nt && open > 0; ++k)
                        if (row[k] == 0.0 && targets[k].contains(u)) {
                            row[k] = 1.0;
                            --open;
                        }
                    if (m < grid.nx) {
                        row[nt] += sq_dist(u, &s[(m + 1) * d], d);
                        row[nt + 1] += 1.0;
                    }
                    if (!prev.empty()) {
                        row[nt + 2] += sq_dist(u, &prev[m * d], d);
                        row[nt + 3] += 1.0;
                    }
                }
            }
            if (n + 1 >= first) prev.assign(s.begin(), s.end());
            return n < last;
        });
        return row;
    });

    std::vector<double> sums[4];
    for (const auto& r : rows)
        for (int q = 0; q < 4; ++q) sums[q].push_back(r[nt + q]);
    const double space_rms = std::sqrt(pairwise_sum(sums[0]) / std::max(1.0, pairwise_sum(sums[1])));
    const double time_rms = std::sqrt(pairwise_sum(sums[2]) / std::max(1.0, pairwise_sum(sums[3])));
    const double floor = 2.0 * std::max(space_rms, time_rms);

    std::vector<HitReport> out;
    for (std::size_t k = 0; k < nt; ++k) {
        HitReport r;
        r.target = targets[k];
        for (const auto& row : rows) r.hits += row[k] != 0.0;
        r.n_paths = n_paths;
        r.estimate = static_cast<double>(r.hits) / n_paths;
        r.ci = wilson_interval(r.hits, n_paths);
        r.zero_hit_upper = 1.0 - std::pow(0.05, 1.0 / n_paths);
        r.nx = grid.nx;
        r.dt = grid.dt;
        r.noise_floor = floor;
        r.resolution_warning = targets[k].inner_size() < floor;
        out.push_back(std::move(r));
    }
    return out;
}

std::pair<double, double> sandwich_indices(SandwichVariant variant, int d, double eta) {
    switch (variant) {
        case SandwichVariant::space_time: return {d - 6 + eta, d - 6 - eta};
        case SandwichVariant::fixed_t: return {d - 2.0, d - 2 - eta};
        case SandwichVariant::fixed_x: return {d - 4 + eta, d - 4 - eta};
    }
    throw ContractError("unknown sandwich variant");
}

SandwichReport sandwich_experiment(const GridSpec& grid, const CoefficientModel& model,
                                   const RngSpec& rng, const SandwichOptions& opt) {
    const int d = model.dim();
    if (!(opt.eta > 0.0)) throw ContractError("eta must be positive");
    if (opt.radii.empty()) throw ContractError("radius ladder is empty");
    if (opt.mesh_per_radius < 2) throw ContractError("ball mesh needs >= 2 cells per radius");
    if (!(opt.cover_factor * opt.mesh_per_radius > 1.0))
        throw ContractError("cover scale must exceed the mesh cell");
    const auto z = level_or_zero(opt.z, d);
    std::vector<double> radii = opt.radii;
    std::sort(radii.begin(), radii.end());
    for (double r : radii)
        if (!(r > 0.0)) throw ContractError("radii must be positive");

    HitWindow w = opt.window;
    if (opt.variant == SandwichVariant::fixed_t) w.t0 = w.t1;
    if (opt.variant == SandwichVariant::fixed_x) w.x1 = w.x0;
    std::vector<Target> targets;
    for (double r : radii) targets.push_back(Target::ball(z, r));
    auto hits = hit_probability(grid, model, rng, opt.n_paths, w, targets, opt.threads);

    SandwichReport rep;
    rep.variant = opt.variant;
    rep.dim = d;
    std::tie(rep.lower_index, rep.upper_index) = sandwich_indices(opt.variant, d, opt.eta);
    std::vector<double> est, caps, covers;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        SandwichRow row;
        row.radius = radii[k];
        row.hit = std::move(hits[k]);
        const auto mesh = potential::ball_mesh(d, radii[k], radii[k] / opt.mesh_per_radius, z);
        potential::RieszKernelSpec spec;
        spec.beta = rep.lower_index;
        potential::CapacityOptions copt;
        copt.threads = opt.threads;
        row.capacity = potential::capacity(mesh, spec, copt).capacity;
        const auto cover = potential::hausdorff_upper(mesh, rep.upper_index, opt.cover_factor * radii[k]);
        row.cover_value = cover.value;
        row.cover_infinite = cover.infinite;
        est.push_back(row.hit.estimate);
        caps.push_back(row.capacity);
        covers.push_back(cover.infinite ? std::numeric_limits<double>::infinity() : cover.value);
        rep.rows.push_back(std::move(row));
    }
    const auto [emin, emax] = std::minmax_element(est.begin(), est.end());
    rep.min_over_max = *emax > 0.0 ? *emin / *emax : 0.0;
    rep.hit_slope = log_slope(radii, est);
    rep.capacity_slope = log_slope(radii, caps);
    rep.cover_slope = log_slope(radii, covers);
    return rep;
}

// ---------------------------------------------------------------- level sets

bool in_level_set(const Trajectory& traj, int n, int m, std::span<const double> z,
                  double tolerance) {
    double s = 0.0;
    for (int i = 0; i < traj.dim; ++i) {
        const double e = traj.at(n, m, i) - z[i];
        s += e * e;
    }
    return std::sqrt(s) <= tolerance;
}

LevelSetSample level_set(const Trajectory& traj, std::span<const double> z, double tolerance,
                         const LevelSetOptions& opt) {
    if (!(tolerance >= 0.0)) throw ContractError("level-set tolerance must be >= 0");
    if (static_cast<int>(z.size()) != traj.dim) throw ContractError("level z has the wrong dimension");
    const GridSpec& g = traj.grid;
    const int nt = static_cast<int>(traj.values.size() / (static_cast<std::size_t>(g.sites()) * traj.dim)) - 1;
    if (nt < 0) throw ContractError("trajectory holds no slices");
    const auto steps = window_nodes(opt.window.t0, opt.window.t1, g.dt, nt);
    const auto sites = window_nodes(opt.window.x0, opt.window.x1, g.dx(), g.nx);

    LevelSetSample out;
    out.z.assign(z.begin(), z.end());
    out.tolerance = tolerance;
    out.section_step = opt.section_step >= 0 ? std::min(opt.section_step, nt) : nt;
    out.section_site = opt.section_site >= 0 ? std::min(opt.section_site, g.nx) : g.nx / 2;
    std::set<int> ts, xs;
    for (int n : steps)
        for (int m : sites)
            if (in_level_set(traj, n, m, z, tolerance)) {
                out.nodes.emplace_back(n, m);
                ts.insert(n);
                xs.insert(m);
            }
    out.time_projection.assign(ts.begin(), ts.end());
    out.space_projection.assign(xs.begin(), xs.end());
    for (int n : steps)
        if (in_level_set(traj, n, out.section_site, z, tolerance)) out.fixed_x_section.push_back(n);
    for (int m : sites)
        if (in_level_set(traj, out.section_step, m, z, tolerance)) out.fixed_t_section.push_back(m);
    return out;
}

double cell_increment_rms(const Trajectory& traj) {
    const GridSpec& g = traj.grid;
    const int d = traj.dim;
    const int nt = static_cast<int>(traj.values.size() / (static_cast<std::size_t>(g.sites()) * d)) - 1;
    if (nt < 1) throw ContractError("increment RMS needs at least one step");
    std::vector<double> per_slice;
    for (int n = 1; n <= nt; ++n) {
        double s = 0.0;
        const auto sl = traj.slice(n);
        for (int m = 0; m < g.nx; ++m) s += sq_dist(&sl[m * d], &sl[(m + 1) * d], d);
        per_slice.push_back(s);
    }
    return std::sqrt(pairwise_sum(per_slice) / (static_cast<double>(nt) * g.nx));
}

double default_level_tolerance(const Trajectory& traj) { return 2.0 * cell_increment_rms(traj); }

// ---------------------------------------------------------------- dimensions

Prediction predict(RandomSet which, int d) {
    Prediction p;
    const double dd = d;
    switch (which) {
        case RandomSet::range_tx:
            p = {6.0, std::max(dd - 6.0, 0.0), d, d > 6, "d > 6"};
            break;
        case RandomSet::range_x:
            p = {2.0, std::max(dd - 2.0, 0.0), d, d > 2, "d > 2, fixed t"};
            break;
        case RandomSet::range_t:
            p = {4.0, std::max(dd - 4.0, 0.0), d, d > 4, "d > 4, fixed x"};
            break;
        case RandomSet::levelset_L:
            p = {3.0 - dd / 2.0, dd / 2.0, 3, d >= 1 && d <= 5,
                 "1 <= d <= 5, time-space set under the parabolic metric"};
            break;
        case RandomSet::levelset_T:
            p = {(6.0 - dd) / 4.0, (dd - 2.0) / 4.0, 1, d > 2 && d < 6, "2 < d < 6"};
            break;
        case RandomSet::levelset_X:
            p = {(6.0 - dd) / 2.0, (dd - 4.0) / 2.0, 1, d == 5, "d = 5"};
            break;
        case RandomSet::levelset_Lx:
            p = {(4.0 - dd) / 4.0, dd / 4.0, 1, d >= 1 && d < 4, "1 <= d < 4"};
            break;
        case RandomSet::levelset_Lt:
            p = {(2.0 - dd) / 2.0, dd / 2.0, 1, d == 1, "d = 1"};
            break;
    }
    return p;
}

std::vector<double> dyadic_scales(double k0, double k1, double step) {
    if (!(step > 0.0) || k1 < k0) throw ContractError("dyadic ladder needs k0 <= k1 and step > 0");
    std::vector<double> out;
    for (double k = k0; k <= k1 + 1e-9; k += step) out.push_back(std::pow(2.0, -k));
    return out;
}

namespace {

// RMS of |v_{k+1} - v_k| over consecutive entries of a list of d-vectors.
double consecutive_rms(const std::vector<double>& v, int d) {
    const std::size_t n = v.size() / d;
    if (n < 2) return 0.0;
    std::vector<double> sq;
    for (std::size_t k = 0; k + 1 < n; ++k) sq.push_back(sq_dist(&v[k * d], &v[(k + 1) * d], d));
    return std::sqrt(pairwise_sum(sq) / sq.size());
}

bool within(const double* u, const std::vector<double>& z, int d, double tol) {
    return std::sqrt(sq_dist(u, z.data(), d)) <= tol;
}

bool uses_direct_slice(RandomSet which) {
    return which == RandomSet::range_x || which == RandomSet::levelset_Lt;
}

}  // namespace

DimensionReport dimension_report(const GridSpec& grid, const CoefficientModel& model,
                                 const RngSpec& rng, RandomSet which,
                                 const DimensionOptions& opt) {
    grid.validate();
    const int d = model.dim();
    DimensionReport rep;
    rep.which = which;
    rep.d = d;
    rep.prediction = predict(which, d);
    if (!rep.prediction.covered)
        throw ContractError(to_string(which) + " with d = " + std::to_string(d) +
                            " lies outside the covered regime (" + rep.prediction.regime + ")");
    if (opt.n_paths < 1) throw ContractError("dimension_report needs n_paths >= 1");
    if (opt.scales.empty()) throw ContractError("dimension_report needs a scale ladder");
    if (opt.trim < 0 || static_cast<int>(opt.scales.size()) - 2 * opt.trim < 4)
        throw ContractError("box counting needs at least four scales after trimming");
    if (!(opt.tolerance_factor > 0.0)) throw ContractError("tolerance factor must be positive");
    const auto z = level_or_zero(opt.z, d);
    const double t_fix = opt.t < 0.0 ? grid.T : opt.t;
    const double t0 = opt.window.t0 < 0.0 ? grid.T / 4.0 : opt.window.t0;
    const double t1 = opt.window.t1 < 0.0 ? grid.T : opt.window.t1;
    if (!(t_fix > 0.0) || t_fix > grid.T + 1e-12) throw ContractError("fixed time must lie in (0, T]");
    if (!(opt.x > 0.0) || !(opt.x < 1.0)) throw ContractError("fixed site must lie in (0, 1)");
    if (!(t0 > 0.0) || t1 > grid.T + 1e-12 || t0 > t1) throw ContractError("time window must lie in (0, T]");

    const bool direct = opt.direct_slice && uses_direct_slice(which);
    if (direct && !model.is_additive())
        throw ContractError("direct slices need an additive model");
    const int nx = direct && opt.direct_nx > 0 ? opt.direct_nx : grid.nx;
    const auto interior = [&](int n_sites) {
        std::vector<int> out;
        for (int m : window_nodes(opt.window.x0, opt.window.x1, 1.0 / n_sites, n_sites))
            if (m > 0 && m < n_sites) out.push_back(m);
        return out;
    };
    const auto sites = interior(nx);
    const auto steps = window_nodes(t0, t1, grid.dt, grid.nt());
    const int n_fix = grid.step_of(t_fix);
    const int m_fix = grid.site_of(opt.x);
    if (sites.empty() || steps.empty()) throw ContractError("window holds no grid nodes");
    const potential::Metric metric = which == RandomSet::levelset_L ? potential::Metric::parabolic
                                                                    : potential::Metric::euclidean;
    const std::size_t ns = opt.scales.size();

    auto rows = map_paths(opt.n_paths, opt.threads, [&](std::uint64_t path) {
        potential::PointSet pts;
        switch (which) {
            case RandomSet::range_x:
            case RandomSet::levelset_Lt: {
                std::vector<double> slice;
                if (direct) {
                    const double ratio = grid.dt * grid.nx * grid.nx;
                    slice = sample_additive_slice(nx, grid.boundary, ratio, t_fix, model, rng, path)
                                .values;
                } else {
                    run_path(grid, model, rng, path, [&](int n, std::span<const double> s) {
                        if (n == n_fix) slice.assign(s.begin(), s.end());
                        return n < n_fix;
                    });
                }
                std::vector<double> vals;
                for (int m : sites) vals.insert(vals.end(), &slice[m * d], &slice[m * d] + d);
                if (which == RandomSet::range_x) {
                    pts.dim = d;
                    pts.coords = vals;
                } else {
                    const double tol = opt.tolerance_factor * consecutive_rms(vals, d);
                    pts.dim = 1;
                    for (std::size_t k = 0; k < sites.size(); ++k)
                        if (within(&vals[k * d], z, d, tol)) pts.coords.push_back(double(sites[k]) / nx);
                }
                break;
            }
            case RandomSet::range_t:
            case RandomSet::levelset_Lx: {
                std::vector<double> series;
                run_path(grid, model, rng, path, [&](int n, std::span<const double> s) {
                    if (n >= steps.front())
                        series.insert(series.end(), &s[m_fix * d], &s[m_fix * d] + d);
                    return n < steps.back();
                });
                if (which == RandomSet::range_t) {
                    pts.dim = d;
                    pts.coords = series;
                } else {
                    const double tol = opt.tolerance_factor * consecutive_rms(series, d);
                    pts.dim = 1;
                    for (std::size_t k = 0; k < steps.size(); ++k)
                        if (within(&series[k * d], z, d, tol)) pts.coords.push_back(grid.t(steps[k]));
                }
                break;
            }
            default: {
                // full window I x J
                const std::size_t w = sites.size();
                std::vector<double> field;
                run_path(grid, model, rng, path, [&](int n, std::span<const double> s) {
                    if (n >= steps.front())
                        for (int m : sites) field.insert(field.end(), &s[m * d], &s[m * d] + d);
                    return n < steps.back();
                });
                if (which == RandomSet::range_tx) {
                    pts.dim = d;
                    pts.coords = field;
                    break;
                }
                std::vector<double> sq;
                for (std::size_t k = 0; k < steps.size(); ++k)
                    for (std::size_t j = 0; j + 1 < w; ++j)
                        sq.push_back(sq_dist(&field[(k * w + j) * d], &field[(k * w + j + 1) * d], d));
                const double tol = opt.tolerance_factor * std::sqrt(pairwise_sum(sq) / std::max<std::size_t>(1, sq.size()));
                std::set<int> ts, xs;
                pts.dim = which == RandomSet::levelset_L ? 2 : 1;
                for (std::size_t k = 0; k < steps.size(); ++k)
                    for (std::size_t j = 0; j < w; ++j)
                        if (within(&field[(k * w + j) * d], z, d, tol)) {
                            if (which == RandomSet::levelset_L) {
                                pts.coords.push_back(grid.t(steps[k]));
                                pts.coords.push_back(grid.x(sites[j]));
                            }
                            ts.insert(steps[k]);
                            xs.insert(sites[j]);
                        }
                if (which == RandomSet::levelset_T)
                    for (int n : ts) pts.coords.push_back(grid.t(n));
                if (which == RandomSet::levelset_X)
                    for (int m : xs) pts.coords.push_back(grid.x(m));
                break;
            }
        }
        std::vector<double> row(ns + 1, 0.0);
        row[ns] = static_cast<double>(pts.size());
        if (pts.size() >= opt.min_points) {
            const auto c = potential::box_counts(pts, metric, opt.scales);
            std::copy(c.begin(), c.end(), row.begin());
        }
        return row;
    });

    std::vector<std::vector<double>> pooled(ns);
    std::vector<double> points;
    for (const auto& r : rows) {
        const auto np = static_cast<std::size_t>(r[ns]);
        if (np == 0) {
            ++rep.paths_empty;
        } else if (np < opt.min_points) {
            ++rep.paths_sparse;
        } else {
            ++rep.paths_used;
            points.push_back(r[ns]);
            for (std::size_t k = 0; k < ns; ++k) pooled[k].push_back(r[k]);
        }
    }
    if (rep.paths_used == 0) {
        if (rep.paths_sparse == 0)
            rep.note = opt.n_paths == 1 ? "empty on this path" : "empty on every path";
        else
            rep.note = "fewer than " + std::to_string(opt.min_points) + " points on every path";
        return rep;
    }
    std::vector<double> mean(ns);
    for (std::size_t k = 0; k < ns; ++k) mean[k] = pairwise_sum(pooled[k]) / rep.paths_used;
    rep.mean_points = static_cast<std::size_t>(std::llround(pairwise_sum(points) / rep.paths_used));
    rep.box = potential::fit_box_counts(opt.scales, mean, {opt.trim});
    rep.fitted = true;
    rep.measured = rep.box.fit.exponent;
    rep.identity_sum = rep.measured + rep.prediction.codimension;
    rep.identity_ok = std::abs(rep.identity_sum - rep.prediction.ambient) <= opt.identity_tolerance;
    return rep;
}

// ---------------------------------------------------------------- names

namespace {

template <class E, std::size_t N>
E parse_name(const std::string& name, const std::pair<E, const char*> (&table)[N], const char* what) {
    for (const auto& [v, s] : table)
        if (name == s) return v;
    throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

template <class E, std::size_t N>
std::string name_of(E v, const std::pair<E, const char*> (&table)[N]) {
    for (const auto& [e, s] : table)
        if (e == v) return s;
    return "?";
}

constexpr std::pair<RandomSet, const char*> kSets[] = {
    {RandomSet::range_tx, "range_tx"},       {RandomSet::range_x, "range_x"},
    {RandomSet::range_t, "range_t"},         {RandomSet::levelset_L, "levelset_L"},
    {RandomSet::levelset_T, "levelset_T"},   {RandomSet::levelset_X, "levelset_X"},
    {RandomSet::levelset_Lx, "levelset_Lx"}, {RandomSet::levelset_Lt, "levelset_Lt"}};
constexpr std::pair<SandwichVariant, const char*> kVariants[] = {
    {SandwichVariant::space_time, "space_time"},
    {SandwichVariant::fixed_t, "fixed_t"},
    {SandwichVariant::fixed_x, "fixed_x"}};
constexpr std::pair<CollapseMode, const char*> kModes[] = {{CollapseMode::space, "space"},
                                                           {CollapseMode::mixed, "mixed"}};

}  // namespace

std::string to_string(RandomSet which) { return name_of(which, kSets); }
RandomSet parse_random_set(const std::string& name) { return parse_name(name, kSets, "random set"); }
std::string to_string(SandwichVariant v) { return name_of(v, kVariants); }
SandwichVariant parse_sandwich_variant(const std::string& name) {
    return parse_name(name, kVariants, "sandwich variant");
}
std::string to_string(CollapseMode m) { return name_of(m, kModes); }
CollapseMode parse_collapse_mode(const std::string& name) {
    return parse_name(name, kModes, "collapse mode");
}

}  // namespace heatprobe::stats
