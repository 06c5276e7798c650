#include "heatprobe/malliavin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "heatprobe/error.hpp"

namespace heatprobe::malliavin {

// ---------------------------------------------------------------------------
// Quadrature

QuadratureSet QuadratureSet::all_steps(const GridSpec& grid, int last_step) {
    QuadratureSet q;
    for (int n = 0; n < last_step; ++n) {
        q.r_steps.push_back(n);
        q.r_weights.push_back(grid.dt);
    }
    return q;
}

QuadratureSet QuadratureSet::graded(const GridSpec& grid, std::span<const int> anchor_steps,
                                    int nodes) {
    std::vector<int> anchors;
    for (int a : anchor_steps)
        if (a > 0) anchors.push_back(a);
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
    if (anchors.empty()) throw DomainError("graded quadrature needs an anchor after t = 0");
    if (nodes < static_cast<int>(anchors.size()))
        throw DomainError("graded quadrature needs at least one node per anchor segment");

    struct Segment {
        int lo, hi, alloc = 0;
    };
    std::vector<Segment> segs;
    int prev = 0;
    for (int a : anchors) {
        segs.push_back({prev, a});
        prev = a;
    }
    // shortest segments first so leftover nodes flow to the long ones
    std::vector<std::size_t> order(segs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return segs[a].hi - segs[a].lo < segs[b].hi - segs[b].lo;
    });
    int remaining = nodes;
    for (std::size_t k = 0; k < order.size(); ++k) {
        Segment& s = segs[order[k]];
        const int share = remaining / static_cast<int>(order.size() - k);
        s.alloc = std::clamp(share, 1, s.hi - s.lo);
        remaining -= s.alloc;
    }

    QuadratureSet q;
    for (const Segment& s : segs) {
        const int len = s.hi - s.lo;
        const int K = s.alloc;
        // stratum j covers distances [b_{j-1}, b_j) steps before the anchor
        std::vector<int> b(K + 1, 0);
        for (int j = 1; j <= K; ++j) {
            const double frac = double(j) / K;
            const int target = static_cast<int>(std::lround(len * frac * frac));
            b[j] = std::clamp(target, b[j - 1] + 1, len - (K - j));
        }
        b[K] = len;
        for (int j = 1; j <= K; ++j) {
            const int mid = (b[j - 1] + b[j] - 1) / 2;
            q.r_steps.push_back(s.hi - 1 - mid);
            q.r_weights.push_back((b[j] - b[j - 1]) * grid.dt);
        }
    }
    std::vector<std::size_t> idx(q.r_steps.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return q.r_steps[a] < q.r_steps[c]; });
    QuadratureSet sorted;
    for (std::size_t i : idx) {
        sorted.r_steps.push_back(q.r_steps[i]);
        sorted.r_weights.push_back(q.r_weights[i]);
    }
    return sorted;
}

double QuadratureSet::total_time() const {
    return std::accumulate(r_weights.begin(), r_weights.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Forward propagation

namespace {

// J[i * d + l] = dt db_i/du_l + scale * sum_j dsigma_ij/du_l xi_j
void local_jacobian(const CoefficientModel& model, std::span<const double> u,
                    std::span<const double> xi, double dt, double scale, std::span<double> dsig,
                    std::span<double> db, std::span<double> J) {
    const int d = model.dim();
    std::vector<double> sig(d * d);
    model.linearization(u, sig, dsig, db);
    for (int i = 0; i < d; ++i) {
        for (int l = 0; l < d; ++l) {
            double acc = dt * db[i * d + l];
            for (int j = 0; j < d; ++j) acc += scale * dsig[(i * d + j) * d + l] * xi[j];
            J[i * d + l] = acc;
        }
    }
}

}  // namespace

DerivativePropagator::DerivativePropagator(const Trajectory& path, const CoefficientModel& model,
                                           QuadratureSet quad)
    : path_(path), model_(model) {
    if (!path.has_noise()) throw ContractError("derivative propagation needs the path's noise");
    if (path.dim != model.dim()) throw ContractError("model and path dimensions differ");
    const int nt = path.grid.nt();
    for (int r : quad.r_steps)
        if (r < 0 || r >= nt) throw ContractError("quadrature node outside the path's steps");
    slab_.grid = path.grid;
    slab_.dim = model.dim();
    slab_.n = 0;
    slab_.quad = std::move(quad);
    slab_.values.assign(slab_.quad.size() * path.grid.sites() * slab_.dim * slab_.field_size(), 0.0);
}

void DerivativePropagator::advance_to(int n_target) {
    const GridSpec& g = path_.grid;
    if (n_target < slab_.n || n_target > g.nt())
        throw ContractError("derivative slab can only move forward within the path");
    const int d = slab_.dim;
    const int S = g.sites();
    const int nx = g.nx;
    const std::size_t fs = slab_.field_size();
    const double lapc = g.dt * double(nx) * nx;
    const bool dirichlet = g.boundary == Boundary::dirichlet;
    const bool additive = model_.is_additive();
    std::vector<double> J(static_cast<std::size_t>(S) * d * d, 0.0), dsig(d * d * d), db(d * d),
        sig(d * d);
    scratch_.resize(fs);

    for (; slab_.n < n_target; ++slab_.n) {
        const int n = slab_.n;
        const auto u = path_.slice(n);
        if (!additive) {
            for (int m = 0; m < S; ++m) {
                local_jacobian(model_, u.subspan(m * d, d),
                               {path_.noise.data() + (static_cast<std::size_t>(n) * S + m) * d,
                                static_cast<std::size_t>(d)},
                               g.dt, std::sqrt(g.dt / g.cell(m)), dsig, db,
                               {J.data() + static_cast<std::size_t>(m) * d * d,
                                static_cast<std::size_t>(d) * d});
            }
        }
        for (std::size_t q = 0; q < slab_.quad.size(); ++q) {
            const int r = slab_.quad.r_steps[q];
            if (r > n) break;  // nodes are sorted by step
            for (int v = 0; v < S; ++v) {
                for (int k = 0; k < d; ++k) {
                    double* D = slab_.values.data() + ((q * S + v) * d + k) * fs;
                    if (r == n) {
                        // birth: sigma_.k(u^n(v)) / c_v at site v
                        std::fill(D, D + fs, 0.0);
                        if (dirichlet && (v == 0 || v == nx)) continue;
                        model_.sigma(u.subspan(v * d, d), sig);
                        for (int i = 0; i < d; ++i) D[v * d + i] = sig[i * d + k] / g.cell(v);
                        continue;
                    }
                    for (int m = 0; m <= nx; ++m) {
                        double* out = &scratch_[m * d];
                        if (dirichlet && (m == 0 || m == nx)) {
                            std::fill(out, out + d, 0.0);
                            continue;
                        }
                        const int left = m == 0 ? 1 : m - 1;
                        const int right = m == nx ? nx - 1 : m + 1;
                        const double* Jm = &J[static_cast<std::size_t>(m) * d * d];
                        for (int i = 0; i < d; ++i) {
                            double v2 = D[m * d + i] +
                                        lapc * (D[left * d + i] - 2.0 * D[m * d + i] + D[right * d + i]);
                            if (!additive)
                                for (int l = 0; l < d; ++l) v2 += Jm[i * d + l] * D[m * d + l];
                            out[i] = v2;
                        }
                    }
                    for (std::size_t e = 0; e < fs; ++e) {
                        if (!std::isfinite(scratch_[e])) {
                            std::ostringstream msg;
                            msg << "derivative field became non-finite at step " << n + 1;
                            throw BlowUpError(msg.str(), n + 1, static_cast<long>(e / d),
                                              static_cast<long>(path_.path_index));
                        }
                    }
                    std::copy(scratch_.begin(), scratch_.end(), D);
                }
            }
        }
    }
}

DerivativeSlab propagate_derivatives(const Trajectory& path, const CoefficientModel& model,
                                     const QuadratureSet& quad, int n_final) {
    DerivativePropagator prop(path, model, quad);
    prop.advance_to(n_final < 0 ? path.grid.nt() : n_final);
    return prop.slab();
}

// ---------------------------------------------------------------------------
// Matrices

bool MalliavinMatrix::is_psd(double tol) const {
    if (!gamma.isApprox(gamma.transpose(), 1e-12)) return false;
    const double trace = gamma.trace();
    return eigenvalues().minCoeff() >= -tol * std::max(trace, 0.0);
}

Eigen::VectorXd MalliavinMatrix::eigenvalues() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gamma, Eigen::EigenvaluesOnly).eigenvalues();
}

MalliavinMatrix one_point_matrix(const DerivativeSlab& slab, int m) {
    const int d = slab.dim;
    const int S = slab.grid.sites();
    if (m < 0 || m >= S) throw DomainError("one_point_matrix site outside the grid");
    MalliavinMatrix out;
    out.gamma = Eigen::MatrixXd::Zero(d, d);
    out.quadrature_nodes = slab.quad.size();
    for (std::size_t q = 0; q < slab.quad.size(); ++q) {
        if (slab.quad.r_steps[q] >= slab.n) continue;
        for (int v = 0; v < S; ++v) {
            const double w = slab.quad.r_weights[q] * slab.grid.cell(v);
            for (int k = 0; k < d; ++k) {
                const double* D = slab.field(q, v, k) + m * d;
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) out.gamma(i, j) += w * D[i] * D[j];
            }
        }
    }
    return out;
}

Eigen::MatrixXd TwoPointMatrix::bloc(int which) const {
    switch (which) {
        case 1: return gamma.topLeftCorner(dim, dim);
        case 2: return gamma.topRightCorner(dim, dim);
        case 3: return gamma.bottomLeftCorner(dim, dim);
        case 4: return gamma.bottomRightCorner(dim, dim);
        default: throw DomainError("bloc index must be 1..4");
    }
}

double TwoPointMatrix::mean_abs(int which) const { return bloc(which).cwiseAbs().mean(); }

bool TwoPointMatrix::is_psd(double tol) const {
    MalliavinMatrix m{gamma, 0};
    return m.is_psd(tol);
}

TwoPointMatrix increment_form(const Eigen::MatrixXd& joint, int dim) {
    if (joint.rows() != 2 * dim || joint.cols() != 2 * dim)
        throw ContractError("joint Gram matrix must be 2d x 2d");
    Eigen::MatrixXd T = Eigen::MatrixXd::Identity(2 * dim, 2 * dim);
    T.bottomLeftCorner(dim, dim) = -Eigen::MatrixXd::Identity(dim, dim);
    TwoPointMatrix out;
    out.dim = dim;
    out.gamma = T * joint * T.transpose();
    // exact symmetry; the product only guarantees it to rounding
    out.gamma = 0.5 * (out.gamma + out.gamma.transpose()).eval();
    return out;
}

TwoPointMatrix two_point_matrix(const DerivativeSlab& at_s, int m_s, const DerivativeSlab& at_t,
                                int m_t) {
    if (at_s.quad.r_steps != at_t.quad.r_steps || at_s.quad.r_weights != at_t.quad.r_weights)
        throw ContractError("two-point slabs must share one quadrature set");
    if (at_s.n > at_t.n) throw DomainError("two_point_matrix requires s <= t");
    if (at_s.n == at_t.n && m_s == m_t) throw DomainError("two-point anchors coincide");
    const int d = at_s.dim;
    const int S = at_s.grid.sites();
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    for (std::size_t q = 0; q < at_t.quad.size(); ++q) {
        if (at_t.quad.r_steps[q] >= at_t.n) continue;
        for (int v = 0; v < S; ++v) {
            const double w = at_t.quad.r_weights[q] * at_t.grid.cell(v);
            for (int k = 0; k < d; ++k) {
                const double* a = at_s.field(q, v, k) + m_s * d;
                const double* b = at_t.field(q, v, k) + m_t * d;
                for (int i = 0; i < 2 * d; ++i) {
                    const double ei = i < d ? a[i] : b[i - d];
                    for (int j = 0; j < 2 * d; ++j) {
                        const double ej = j < d ? a[j] : b[j - d];
                        joint(i, j) += w * ei * ej;
                    }
                }
            }
        }
    }
    TwoPointMatrix out = increment_form(joint, d);
    out.n_s = at_s.n;
    out.m_s = m_s;
    out.n_t = at_t.n;
    out.m_t = m_t;
    return out;
}

double bump_derivative(const Trajectory& path, const CoefficientModel& model, int n_star,
                       int m_star, int j_star, double h, int n, int m, int i) {
    if (!path.has_noise()) throw ContractError("bump oracle needs the path's noise");
    const GridSpec& g = path.grid;
    std::vector<double> noise = path.noise;
    noise[(static_cast<std::size_t>(n_star) * g.sites() + m_star) * path.dim + j_star] += h;
    const Trajectory bumped = simulate_with_noise(g, model, noise, path.path_index);
    return (bumped.at(n, m, i) - path.at(n, m, i)) / (h * std::sqrt(g.dt * g.cell(m_star)));
}

// ---------------------------------------------------------------------------
// Scaling experiments

std::string to_string(OffsetFamily f) {
    switch (f) {
        case OffsetFamily::time: return "time";
        case OffsetFamily::space: return "space";
        case OffsetFamily::mixed: return "mixed";
    }
    return "?";
}

std::vector<Partner> anchor_ladder(const GridSpec& grid, double t, double x,
                                   std::span<const double> deltas,
                                   std::span<const OffsetFamily> families) {
    const int n_t = grid.step_of(t);
    const int m_t = grid.site_of(x);
    std::vector<Partner> out;
    for (OffsetFamily fam : families) {
        for (double delta : deltas) {
            if (!(delta > 0.0)) throw DomainError("ladder scales must be positive");
            double time_part = 0.0, space_part = 0.0;
            if (fam == OffsetFamily::time) time_part = delta;
            if (fam == OffsetFamily::space) space_part = delta;
            if (fam == OffsetFamily::mixed) time_part = space_part = 0.5 * delta;
            Partner p;
            p.family = fam;
            p.nominal = delta;
            p.n = n_t - grid.step_of(time_part * time_part);
            p.m = m_t + grid.site_of(space_part);
            if (p.n < 1 || p.m > grid.nx)
                throw DomainError("ladder partner falls outside the grid");
            if (p.n == n_t && p.m == m_t) throw DomainError("ladder partner rounds onto the anchor");
            p.delta = std::sqrt((n_t - p.n) * grid.dt) + (p.m - m_t) * grid.dx();
            out.push_back(p);
        }
    }
    return out;
}

namespace {

struct AdjointSweep {
    const GridSpec& grid;
    const CoefficientModel& model;
    const RngSpec& rng;
    std::uint64_t path;
    int n_t, m_t;
    std::span<const Partner> partners;
    const std::vector<double>& states;
    std::vector<double>& gram_tt;  // d x d
    std::vector<double>& gram_ss;  // per partner d x d
    std::vector<double>& gram_st;
};

// D > 0 fixes the dimension at compile time so the d-loops unroll
template <int D>
void backward_sweep(AdjointSweep& c) {
    const GridSpec& grid = c.grid;
    const CoefficientModel& model = c.model;
    const std::uint64_t path = c.path;
    const int n_t = c.n_t;
    const int d = D > 0 ? D : model.dim();
    const int S = grid.sites();
    const int nx = grid.nx;
    const std::size_t len = static_cast<std::size_t>(S) * d;
    const std::vector<double>& states = c.states;
    auto& gram_tt = c.gram_tt;
    auto& gram_ss = c.gram_ss;
    auto& gram_st = c.gram_st;
    const std::size_t P = c.partners.size();

    // functional f: 0 is u(t,x), 1 + p is u(s_p, y_p); each owns d adjoint vectors
    const std::size_t F = 1 + P;
    std::vector<int> birth(F), site(F);
    birth[0] = n_t;
    site[0] = c.m_t;
    for (std::size_t p = 0; p < P; ++p) {
        birth[1 + p] = c.partners[p].n;
        site[1 + p] = c.partners[p].m;
    }
    std::vector<char> live(F, 0);
    // lambda[(f * d + i) * len + m * d + l]: sensitivity of u_i(functional f) to u^n_l(m)
    std::vector<double> lambda(F * d * len, 0.0), next(len);
    // g[(f * d + i) * d + k] at one site: derivative wrt the k-th noise of that site
    std::vector<double> g(F * d * d);

    NoiseField field(c.rng);
    std::vector<double> xi(len), sig(S * d * d), J(len * d), dsig(d * d * d), db(d * d);
    const bool additive = model.is_additive();
    const bool dirichlet = grid.boundary == Boundary::dirichlet;
    const double lapc = grid.dt * double(nx) * nx;
    std::vector<double> scale(S);
    for (int m = 0; m < S; ++m) scale[m] = std::sqrt(grid.dt / grid.cell(m));
    if (additive)
        for (int m = 0; m < S; ++m) model.sigma(std::span<const double>(states.data() + m * d, d),
                                                {sig.data() + m * d * d, static_cast<std::size_t>(d * d)});

    for (int n = n_t - 1; n >= 0; --n) {
        for (std::size_t f = 0; f < F; ++f) {
            if (birth[f] == n + 1) {
                live[f] = 1;
                if (dirichlet && (site[f] == 0 || site[f] == nx)) continue;  // pinned value
                for (int i = 0; i < d; ++i) lambda[(f * d + i) * len + site[f] * d + i] = 1.0;
            }
        }
        const std::span<const double> u(states.data() + len * n, len);
        if (!additive) {
            field.fill_step(path, static_cast<std::uint32_t>(n), S, d, xi);
            // J[m][i * d + l] = dt db_i/du_l + scale sum_j dsigma_ij/du_l xi_j
            for (int m = 0; m < S; ++m) {
                double* sm = &sig[m * d * d];
                model.linearization(u.subspan(m * d, d), {sm, static_cast<std::size_t>(d * d)}, dsig, db);
                double* Jm = &J[static_cast<std::size_t>(m) * d * d];
                const double* z = &xi[m * d];
                for (int i = 0; i < d; ++i)
                    for (int l = 0; l < d; ++l) {
                        double acc = 0.0;
                        for (int j = 0; j < d; ++j) acc += dsig[(i * d + j) * d + l] * z[j];
                        Jm[i * d + l] = grid.dt * db[i * d + l] + scale[m] * acc;
                    }
            }
        }

        // derivative with respect to the noise of step n, and Gram accumulation
        for (int m = 0; m <= nx; ++m) {
            if (dirichlet && (m == 0 || m == nx)) continue;
            const double* sm = &sig[additive ? 0 : m * d * d];
            for (std::size_t f = 0; f < F; ++f) {
                if (!live[f]) continue;
                for (int i = 0; i < d; ++i) {
                    const double* lam = &lambda[(f * d + i) * len + m * d];
                    for (int k = 0; k < d; ++k) {
                        double acc = 0.0;
                        for (int l = 0; l < d; ++l) acc += lam[l] * sm[l * d + k];
                        g[(f * d + i) * d + k] = acc * scale[m];
                    }
                }
            }
            const auto dot = [&](std::size_t fa, int i, std::size_t fb, int j) {
                const double* a = &g[(fa * d + i) * d];
                const double* b = &g[(fb * d + j) * d];
                double acc = 0.0;
                for (int k = 0; k < d; ++k) acc += a[k] * b[k];
                return acc;
            };
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) gram_tt[i * d + j] += dot(0, i, 0, j);
            for (std::size_t p = 0; p < P; ++p) {
                if (!live[1 + p]) continue;
                for (int i = 0; i < d; ++i) {
                    for (int j = 0; j < d; ++j) {
                        gram_ss[(p * d + i) * d + j] += dot(1 + p, i, 1 + p, j);
                        gram_st[(p * d + i) * d + j] += dot(1 + p, i, 0, j);
                    }
                }
            }
        }
        if (n == 0) break;

        // lambda^n = M_n^T lambda^{n+1}: interior stencil over the flat index,
        // then the mirrored rows 0 and nx that reach their neighbour twice
        const int E = static_cast<int>(len);
        const double centre = 1.0 - 2.0 * lapc;
        for (std::size_t f = 0; f < F; ++f) {
            if (!live[f]) continue;
            for (int i = 0; i < d; ++i) {
                double* lam = &lambda[(f * d + i) * len];
                for (int e = d; e < E - d; ++e)
                    next[e] = centre * lam[e] + lapc * (lam[e - d] + lam[e + d]);
                for (int l = 0; l < d; ++l) {
                    next[l] = centre * lam[l] + lapc * lam[d + l];
                    next[E - d + l] = centre * lam[E - d + l] + lapc * lam[E - 2 * d + l];
                    if (!dirichlet) {
                        next[d + l] += lapc * lam[l];
                        next[E - 2 * d + l] += lapc * lam[E - d + l];
                    }
                }
                if (!additive) {
                    for (int m = 0; m <= nx; ++m) {
                        const double* Jm = &J[static_cast<std::size_t>(m) * d * d];
                        const double* lm = &lam[m * d];
                        for (int l = 0; l < d; ++l) {
                            double acc = 0.0;
                            for (int r = 0; r < d; ++r) acc += Jm[r * d + l] * lm[r];
                            next[m * d + l] += acc;
                        }
                    }
                }
                if (dirichlet)
                    for (int l = 0; l < d; ++l) next[l] = next[nx * d + l] = 0.0;
                std::copy(next.begin(), next.end(), lam);
            }
        }
    }

}

}  // namespace

std::vector<TwoPointMatrix> adjoint_two_point(const GridSpec& grid, const CoefficientModel& model,
                                              const RngSpec& rng, std::uint64_t path, int n_t,
                                              int m_t, std::span<const Partner> partners) {
    grid.validate();
    const int d = model.dim();
    const int S = grid.sites();
    const int nx = grid.nx;
    if (n_t < 1 || n_t > grid.nt() || m_t < 0 || m_t > nx)
        throw DomainError("adjoint anchor outside the grid");
    for (const Partner& p : partners) {
        if (p.n < 1 || p.n > n_t || p.m < 0 || p.m > nx)
            throw DomainError("partner must satisfy 0 < s <= t on the grid");
        if (p.n == n_t && p.m == m_t) throw DomainError("two-point anchors coincide");
    }
    const std::size_t len = static_cast<std::size_t>(S) * d;

    // forward sweep keeping u^0 .. u^{n_t - 1}
    std::vector<double> states(len * n_t);
    {
        Stepper stepper(grid, model, rng, path);
        for (int n = 0; n < n_t; ++n) {
            std::copy(stepper.state().begin(), stepper.state().end(), states.begin() + len * n);
            stepper.step();
        }
    }

    const std::size_t P = partners.size();
    std::vector<double> gram_tt(d * d, 0.0), gram_ss(P * d * d, 0.0), gram_st(P * d * d, 0.0);
    AdjointSweep sweep{grid, model, rng, path, n_t, m_t, partners, states, gram_tt, gram_ss, gram_st};
    switch (d) {
        case 1: backward_sweep<1>(sweep); break;
        case 2: backward_sweep<2>(sweep); break;
        case 3: backward_sweep<3>(sweep); break;
        default: backward_sweep<0>(sweep); break;
    }

    std::vector<TwoPointMatrix> out;
    out.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
        Eigen::MatrixXd joint(2 * d, 2 * d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                joint(i, j) = gram_ss[(p * d + i) * d + j];
                joint(i, d + j) = gram_st[(p * d + i) * d + j];
                joint(d + j, i) = gram_st[(p * d + i) * d + j];
                joint(d + i, d + j) = gram_tt[i * d + j];
            }
        }
        TwoPointMatrix tp = increment_form(joint, d);
        tp.n_s = partners[p].n;
        tp.m_s = partners[p].m;
        tp.n_t = n_t;
        tp.m_t = m_t;
        out.push_back(std::move(tp));
    }
    return out;
}

ScalingRun scaling_run(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                       std::size_t n_paths, double t, double x, std::span<const Partner> partners,
                       int threads) {
    if (n_paths < 2) throw ContractError("scaling_run needs at least two paths");
    const int n_t = grid.step_of(t);
    const int m_t = grid.site_of(x);
    const int d = model.dim();
    const std::size_t P = partners.size();
    // per path and partner: bloc1..4, lambda_min, topd, derivative norm, psd flag
    constexpr std::size_t kStats = 8;
    auto rows = map_paths(n_paths, threads, [&](std::uint64_t path) {
        const auto mats = adjoint_two_point(grid, model, rng, path, n_t, m_t, partners);
        std::vector<double> row(P * kStats);
        for (std::size_t p = 0; p < P; ++p) {
            const auto& tp = mats[p];
            double* r = &row[p * kStats];
            for (int b = 0; b < 4; ++b) r[b] = tp.mean_abs(b + 1);
            const Eigen::VectorXd ev =
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(tp.gamma, Eigen::EigenvaluesOnly).eigenvalues();
            r[4] = ev(0);
            double prod = 1.0;
            for (int k = 0; k < d; ++k) prod *= ev(2 * d - 1 - k);
            r[5] = prod;
            r[6] = tp.bloc(1).trace() / d;
            r[7] = tp.is_psd() ? 0.0 : 1.0;
        }
        return row;
    });

    ScalingRun run;
    run.n_paths = n_paths;
    std::vector<double> col(n_paths);
    for (std::size_t p = 0; p < P; ++p) {
        PartnerStats st;
        st.partner = partners[p];
        const auto stat = [&](std::size_t k) {
            for (std::size_t q = 0; q < n_paths; ++q) col[q] = rows[q][p * kStats + k];
            return summarize(col);
        };
        for (int b = 0; b < 4; ++b) {
            const auto s = stat(b);
            st.bloc_mean[b] = s.mean;
            st.bloc_stderr[b] = s.stderr_mean;
        }
        const auto lm = stat(4);
        st.lambda_min_mean = lm.mean;
        st.lambda_min_stderr = lm.stderr_mean;
        const auto td = stat(5);
        st.topd_mean = td.mean;
        st.topd_stderr = td.stderr_mean;
        st.derivative_norm_mean = stat(6).mean;
        for (std::size_t q = 0; q < n_paths; ++q) st.non_psd += rows[q][p * kStats + 7] > 0.0;
        run.partners.push_back(st);
    }
    return run;
}

namespace {

constexpr std::size_t kMinScalingPaths = 200;
constexpr std::size_t kMinScales = 4;
// decades of delta a ladder must span; the default ladder 2^-2..2^-6 spans 1.2
constexpr double kMinDecades = 1.0;

std::vector<const PartnerStats*> family_members(const ScalingRun& run, OffsetFamily family) {
    if (run.n_paths < kMinScalingPaths)
        throw ContractError("scaling fits need at least 200 paths per scale");
    std::vector<const PartnerStats*> out;
    for (const auto& p : run.partners)
        if (p.partner.family == family) out.push_back(&p);
    std::sort(out.begin(), out.end(),
              [](const PartnerStats* a, const PartnerStats* b) { return a->partner.delta < b->partner.delta; });
    if (out.size() < kMinScales) throw FitError("scaling fits need at least four scales");
    if (std::log10(out.back()->partner.delta / out.front()->partner.delta) < kMinDecades - 1e-9)
        throw FitError("scaling ladder spans less than one decade");
    return out;
}

template <class F>
ScalingFit fit_member(const std::vector<const PartnerStats*>& members, F value) {
    std::vector<double> x, y;
    for (const auto* p : members) {
        x.push_back(p->partner.delta);
        y.push_back(value(*p));
    }
    return fit_power_law(x, y);
}

}  // namespace

BlocFits bloc_scaling(const ScalingRun& run, OffsetFamily family) {
    const auto members = family_members(run, family);
    BlocFits f;
    f.bloc1 = fit_member(members, [](const PartnerStats& p) { return p.bloc_mean[0]; });
    f.bloc23 = fit_member(members, [](const PartnerStats& p) { return 0.5 * (p.bloc_mean[1] + p.bloc_mean[2]); });
    f.bloc4 = fit_member(members, [](const PartnerStats& p) { return p.bloc_mean[3]; });
    return f;
}

EigenFits eigen_scaling(const ScalingRun& run, OffsetFamily family) {
    const auto members = family_members(run, family);
    EigenFits f;
    f.lambda_min = fit_member(members, [](const PartnerStats& p) { return p.lambda_min_mean; });
    f.topd = fit_member(members, [](const PartnerStats& p) { return p.topd_mean; });
    return f;
}

ScalingFit derivative_norm_scaling(const ScalingRun& run, OffsetFamily family) {
    return fit_member(family_members(run, family),
                      [](const PartnerStats& p) { return p.derivative_norm_mean; });
}

}  // namespace heatprobe::malliavin
