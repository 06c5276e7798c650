#include "heatprobe/potential.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "heatprobe/error.hpp"
#include "heatprobe/parallel.hpp"

namespace heatprobe::potential {

void PointSet::push(std::span<const double> p) {
    if (static_cast<int>(p.size()) != dim) throw ContractError("point has the wrong dimension");
    coords.insert(coords.end(), p.begin(), p.end());
}

double distance(Metric metric, const double* a, const double* b, int dim) {
    if (metric == Metric::euclidean) {
        double s = 0.0;
        for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    }
    double s = 0.0;
    for (int k = 1; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(std::abs(a[0] - b[0])) + std::sqrt(s);
}

double parabolic_distance(double t, double x, double s, double y) {
    return std::sqrt(std::abs(t - s)) + std::abs(x - y);
}

double diameter(const PointSet& pts, Metric metric) {
    double d = 0.0;
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d = std::max(d, distance(metric, pts[i], pts[j], pts.dim));
    return d;
}

double riesz_kernel(const RieszKernelSpec& spec, double r) {
    if (spec.beta < 0.0) return 1.0;
    if (!(r >= 0.0)) throw DomainError("kernel distance must be >= 0");
    if (spec.cutoff_h > 0.0) r = std::max(r, 0.5 * spec.cutoff_h);
    if (r == 0.0) throw DomainError("Riesz kernel is singular at r = 0 without a cutoff");
    if (spec.beta > 0.0) return std::pow(r, -spec.beta);
    if (!(spec.n0 > 0.0)) throw ConfigError("log kernel needs n0 > 0");
    return std::log(spec.n0 / r);
}

void DiscreteMeasure::validate() const {
    if (weights.size() != support.size())
        throw ContractError("measure needs one weight per support point");
    if (weights.empty()) throw ContractError("measure has no atoms");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ContractError("measure weights must be >= 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ContractError("measure weights must sum to 1");
}

namespace {

// fills in n0 from the set and checks it dominates the diameter
RieszKernelSpec resolve(RieszKernelSpec spec, const PointSet& pts, Metric metric) {
    if (spec.beta != 0.0) return spec;
    const double diam = diameter(pts, metric);
    if (spec.n0 <= 0.0) spec.n0 = diam > 0.0 ? 4.0 * diam : 1.0;
    if (!(spec.n0 > diam)) throw ConfigError("log kernel needs n0 above the set diameter");
    // the clamped distance can sit below the diameter but never above n0
    return spec;
}

}  // namespace

double energy(const DiscreteMeasure& mu, const RieszKernelSpec& spec_in, Metric metric) {
    mu.validate();
    if (spec_in.beta < 0.0) return 1.0;
    if (!(spec_in.cutoff_h > 0.0))
        throw DomainError("energy of a discrete measure is infinite without a cutoff (beta >= 0)");
    const RieszKernelSpec spec = resolve(spec_in, mu.support, metric);
    const std::size_t n = mu.support.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            row += mu.weights[j] *
                   riesz_kernel(spec, distance(metric, mu.support[i], mu.support[j], mu.support.dim));
        total += mu.weights[i] * row;
    }
    return total;
}

CompactSetMesh interval_mesh(std::size_t n) {
    if (n < 1) throw ContractError("mesh needs at least one cell");
    CompactSetMesh m;
    m.points.dim = 1;
    for (std::size_t i = 0; i < n; ++i) m.points.coords.push_back((i + 0.5) / n);
    m.h = 1.0 / n;
    return m;
}

CompactSetMesh square_mesh(std::size_t n) {
    if (n < 1) throw ContractError("mesh needs at least one cell");
    CompactSetMesh m;
    m.points.dim = 2;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            m.points.coords.push_back((i + 0.5) / n);
            m.points.coords.push_back((j + 0.5) / n);
        }
    m.h = 1.0 / n;
    return m;
}

CompactSetMesh ball_mesh(int dim, double radius, double h, std::span<const double> centre) {
    if (dim < 1 || !(radius >= 0.0) || !(h > 0.0)) throw ContractError("ball mesh needs dim >= 1, r >= 0, h > 0");
    if (!centre.empty() && static_cast<int>(centre.size()) != dim)
        throw ContractError("ball centre has the wrong dimension");
    CompactSetMesh m;
    m.points.dim = dim;
    m.h = h;
    const long k = static_cast<long>(std::floor(radius / h));
    std::vector<long> idx(dim, -k);
    std::vector<double> p(dim);
    while (true) {
        double r2 = 0.0;
        for (int a = 0; a < dim; ++a) {
            p[a] = idx[a] * h;
            r2 += p[a] * p[a];
        }
        if (r2 <= radius * radius * (1.0 + 1e-12)) {
            for (int a = 0; a < dim; ++a) p[a] += centre.empty() ? 0.0 : centre[a];
            m.points.push(p);
        }
        int a = 0;
        while (a < dim && ++idx[a] > k) idx[a++] = -k;
        if (a == dim) break;
    }
    return m;
}

CompactSetMesh parabolic_rectangle(double t0, double t1, double x0, double x1, std::size_t nt,
                                   std::size_t nx) {
    if (nt < 1 || nx < 1 || !(t1 > t0) || !(x1 > x0)) throw ContractError("degenerate rectangle");
    CompactSetMesh m;
    m.points.dim = 2;
    m.metric = Metric::parabolic;
    const double dt = (t1 - t0) / nt, dx = (x1 - x0) / nx;
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            m.points.coords.push_back(t0 + (i + 0.5) * dt);
            m.points.coords.push_back(x0 + (j + 0.5) * dx);
        }
    m.h = std::max(std::sqrt(dt), dx);
    return m;
}

// ---------------------------------------------------------------------------
// Capacity

namespace {

constexpr std::size_t kMaxDenseAtoms = 8000;

// minimizer of w' K w on the face spanned by `support`, if it is interior
bool kkt_polish(const Eigen::MatrixXd& K, std::vector<double>& w, Eigen::VectorXd& Kw, double& E) {
    std::vector<Eigen::Index> act;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) act.push_back(static_cast<Eigen::Index>(i));
    const Eigen::Index a = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd sub(a, a);
    for (Eigen::Index i = 0; i < a; ++i)
        for (Eigen::Index j = 0; j < a; ++j) sub(i, j) = K(act[i], act[j]);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sub);
    if (ldlt.info() != Eigen::Success) return false;
    const Eigen::VectorXd v = ldlt.solve(Eigen::VectorXd::Ones(a));
    const double total = v.sum();
    if (!(total > 0.0) || !v.allFinite() || v.minCoeff() <= 0.0) return false;
    std::vector<double> cand(w.size(), 0.0);
    for (Eigen::Index i = 0; i < a; ++i) cand[act[i]] = v(i) / total;
    Eigen::VectorXd cand_Kw = Eigen::VectorXd::Zero(K.rows());
    for (Eigen::Index i = 0; i < a; ++i) cand_Kw += cand[act[i]] * K.col(act[i]);
    double cand_E = 0.0;
    for (Eigen::Index i = 0; i < a; ++i) cand_E += cand[act[i]] * cand_Kw(act[i]);
    if (!(cand_E < E)) return false;
    w = std::move(cand);
    Kw = std::move(cand_Kw);
    E = cand_E;
    return true;
}

}  // namespace

CapacityResult capacity(const CompactSetMesh& set, RieszKernelSpec spec, const CapacityOptions& opt) {
    const PointSet& pts = set.points;
    const std::size_t n = pts.size();
    if (n == 0) throw ContractError("capacity of an empty mesh");
    CapacityResult out;
    out.equilibrium.support = pts;
    if (spec.beta < 0.0) {
        out.equilibrium.weights.assign(n, 1.0 / n);
        out.energy = out.capacity = 1.0;
        return out;
    }
    if (n > kMaxDenseAtoms) throw ContractError("mesh too large for the dense kernel matrix");
    if (spec.cutoff_h <= 0.0) spec.cutoff_h = set.h;
    if (!(spec.cutoff_h > 0.0)) throw DomainError("capacity needs a positive cutoff or mesh size");
    spec = resolve(spec, pts, set.metric);
    out.n0 = spec.n0;

    Eigen::MatrixXd K(n, n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j)
            K(i, j) = riesz_kernel(spec, distance(set.metric, pts[i], pts[j], pts.dim));
    });

    std::vector<double> w(n, 1.0 / n);
    Eigen::VectorXd Kw = K * Eigen::Map<const Eigen::VectorXd>(w.data(), n);
    double E = 0.0;
    for (std::size_t i = 0; i < n; ++i) E += w[i] * Kw(i);

    long it = 0;
    double gap = INFINITY;
    for (;; ++it) {
        Eigen::Index s = 0;
        Kw.minCoeff(&s);
        gap = 2.0 * (E - Kw(s)) / E;
        if (gap <= opt.tolerance) break;
        if (it >= opt.max_iterations) {
            std::ostringstream msg;
            msg << "capacity: Frank-Wolfe stopped after " << it << " iterations with relative gap "
                << gap;
            throw ConvergenceError(msg.str(), gap);
        }
        if (opt.polish_every > 0 && it > 0 && it % opt.polish_every == 0) {
            if (kkt_polish(K, w, Kw, E)) continue;
        }
        std::size_t a = n;
        for (std::size_t i = 0; i < n; ++i)
            if (w[i] > 0.0 && (a == n || Kw(i) > Kw(a))) a = i;
        const double fw_gain = E - Kw(s);
        const double away_gain = Kw(a) - E;
        if (fw_gain >= away_gain) {
            // toward vertex s
            const double curv = K(s, s) - 2.0 * Kw(s) + E;
            double g = curv > 0.0 ? fw_gain / curv : 1.0;
            g = std::clamp(g, 0.0, 1.0);
            for (std::size_t i = 0; i < n; ++i) w[i] *= 1.0 - g;
            w[s] += g;
            Kw = (1.0 - g) * Kw + g * K.col(s);
        } else {
            // away from vertex a
            const double gmax = w[a] / (1.0 - w[a]);
            const double curv = E - 2.0 * Kw(a) + K(a, a);
            double g = curv > 0.0 ? away_gain / curv : gmax;
            g = std::clamp(g, 0.0, gmax);
            for (std::size_t i = 0; i < n; ++i) w[i] *= 1.0 + g;
            w[a] -= g;
            if (g == gmax) w[a] = 0.0;
            Kw = (1.0 + g) * Kw - g * K.col(a);
        }
        E = 0.0;
        for (std::size_t i = 0; i < n; ++i) E += w[i] * Kw(i);
    }
    // clean up rounding in the weights so the measure validates
    double total = 0.0;
    for (double& v : w) {
        v = std::max(v, 0.0);
        total += v;
    }
    for (double& v : w) v /= total;
    out.equilibrium.weights = std::move(w);
    out.energy = E;
    out.capacity = 1.0 / E;
    out.duality_gap = gap;
    out.iterations = it;
    return out;
}

// ---------------------------------------------------------------------------
// Covers

namespace {

struct CellHash {
    std::size_t operator()(const std::vector<long>& v) const {
        std::size_t h = 1469598103934665603ull;
        for (long x : v) h = (h ^ static_cast<std::size_t>(x)) * 1099511628211ull;
        return h;
    }
};

// neighbours within eps (inclusive up to rounding) via a bucket grid
std::vector<std::vector<std::size_t>> neighbours(const PointSet& pts, Metric metric, double eps) {
    const int k = pts.dim;
    const std::size_t n = pts.size();
    std::vector<double> side(k, eps);
    if (metric == Metric::parabolic) side[0] = eps * eps;
    const auto cell_of = [&](std::size_t i) {
        std::vector<long> c(k);
        for (int a = 0; a < k; ++a) c[a] = static_cast<long>(std::floor(pts[i][a] / side[a]));
        return c;
    };
    std::unordered_map<std::vector<long>, std::vector<std::size_t>, CellHash> buckets;
    for (std::size_t i = 0; i < n; ++i) buckets[cell_of(i)].push_back(i);

    const double reach = eps * (1.0 + 1e-12);
    std::vector<std::vector<std::size_t>> out(n);
    std::vector<long> probe(k), off(k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = cell_of(i);
        std::fill(off.begin(), off.end(), -1);
        while (true) {
            for (int a = 0; a < k; ++a) probe[a] = c[a] + off[a];
            if (auto it = buckets.find(probe); it != buckets.end())
                for (std::size_t j : it->second)
                    if (distance(metric, pts[i], pts[j], k) <= reach) out[i].push_back(j);
            int a = 0;
            while (a < k && ++off[a] > 1) off[a++] = -1;
            if (a == k) break;
        }
        std::sort(out[i].begin(), out[i].end());
    }
    return out;
}

}  // namespace

CoverReport hausdorff_upper(const CompactSetMesh& set, double beta, double epsilon) {
    CoverReport rep;
    rep.epsilon = epsilon;
    rep.beta = beta;
    if (beta < 0.0) {
        rep.infinite = true;
        rep.value = INFINITY;
        return rep;
    }
    if (!(epsilon > set.h)) throw DomainError("cover scale must exceed the mesh cell size");
    const PointSet& pts = set.points;
    const std::size_t n = pts.size();
    if (n == 0) throw ContractError("cover of an empty mesh");
    const auto nb = neighbours(pts, set.metric, epsilon);

    // time counts twice in the parabolic dimension
    const int ambient = set.metric == Metric::parabolic ? pts.dim + 1 : pts.dim;
    const bool shrink = beta > ambient;

    std::vector<std::size_t> count(n);
    for (std::size_t i = 0; i < n; ++i) count[i] = nb[i].size();
    std::vector<char> covered(n, 0);
    using Entry = std::pair<std::size_t, std::size_t>;  // (count, index)
    const auto worse = [](const Entry& a, const Entry& b) {
        return a.first != b.first ? a.first < b.first : a.second > b.second;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
    for (std::size_t i = 0; i < n; ++i) heap.push({count[i], i});

    std::size_t left = n;
    double value = 0.0;
    while (left > 0) {
        const Entry top = heap.top();
        heap.pop();
        if (top.first != count[top.second]) {
            heap.push({count[top.second], top.second});
            continue;
        }
        const std::size_t c = top.second;
        double r = 0.0;
        for (std::size_t p : nb[c]) {
            if (covered[p]) continue;
            covered[p] = 1;
            --left;
            r = std::max(r, distance(set.metric, pts[c], pts[p], pts.dim));
            for (std::size_t q : nb[p]) --count[q];
        }
        r = shrink ? std::min(r, epsilon) : epsilon;
        rep.centers.push_back(c);
        rep.radii.push_back(r);
        // the claimed points stand for cells of size h
        value += std::pow(2.0 * r + set.h, beta);
    }
    rep.ball_count = rep.centers.size();
    rep.value = value;
    return rep;
}

// ---------------------------------------------------------------------------
// Box counting

std::vector<double> box_counts(const PointSet& pts, Metric metric, std::span<const double> scales) {
    const std::size_t n = pts.size();
    const int k = pts.dim;
    std::vector<double> out;
    std::vector<long> keys(n * k);
    std::vector<std::size_t> order(n);
    for (double e : scales) {
        if (!(e > 0.0)) throw ContractError("box scales must be positive");
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < k; ++a) {
                const double side = metric == Metric::parabolic && a == 0 ? e * e : e;
                keys[i * k + a] = static_cast<long>(std::floor(pts[i][a] / side));
            }
        std::iota(order.begin(), order.end(), 0);
        const auto less = [&](std::size_t x, std::size_t y) {
            return std::lexicographical_compare(&keys[x * k], &keys[x * k] + k, &keys[y * k], &keys[y * k] + k);
        };
        std::sort(order.begin(), order.end(), less);
        std::size_t boxes = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (i == 0 || less(order[i - 1], order[i])) ++boxes;
        out.push_back(static_cast<double>(boxes));
    }
    return out;
}

namespace {

std::vector<double> checked_scales(std::span<const double> scales, const BoxOptions& opt) {
    std::vector<double> eps(scales.begin(), scales.end());
    for (double e : eps)
        if (!(e > 0.0)) throw ContractError("box scales must be positive");
    std::sort(eps.begin(), eps.end(), std::greater<>());
    if (opt.trim < 0 || static_cast<int>(eps.size()) - 2 * opt.trim < 4)
        throw ContractError("box counting needs at least four scales after trimming");
    return eps;
}

}  // namespace

BoxCount fit_box_counts(std::span<const double> scales, std::span<const double> counts,
                        const BoxOptions& opt) {
    if (counts.size() != scales.size()) throw ContractError("one count per scale is needed");
    std::vector<std::size_t> order(scales.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scales[a] > scales[b]; });
    BoxCount out;
    out.scales = checked_scales(scales, opt);
    for (std::size_t k : order) out.counts.push_back(counts[k]);
    std::vector<double> inv, cnt;
    for (std::size_t s = opt.trim; s + opt.trim < out.scales.size(); ++s) {
        inv.push_back(1.0 / out.scales[s]);
        cnt.push_back(out.counts[s]);
    }
    out.fit = fit_power_law(inv, cnt);
    return out;
}

BoxCount box_dimension(const PointSet& pts, Metric metric, std::span<const double> scales,
                       const BoxOptions& opt) {
    if (pts.size() < 100) throw ContractError("box counting needs at least 100 points");
    const auto eps = checked_scales(scales, opt);
    const auto counts = box_counts(pts, metric, eps);
    return fit_box_counts(eps, counts, opt);
}

}  // namespace heatprobe::potential
