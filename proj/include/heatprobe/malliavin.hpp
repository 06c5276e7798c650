#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heatprobe/fit.hpp"
#include "heatprobe/solver.hpp"

namespace heatprobe::malliavin {

/// Time nodes of the (r, v) quadrature; every spatial node is used with its
/// cell measure. Node q stands for the noise of step r_steps[q], i.e. the
/// interval [t_n, t_{n+1}), and carries the time measure r_weights[q].
struct QuadratureSet {
    std::vector<int> r_steps;
    std::vector<double> r_weights;

    /// Every step below `last_step`: the quadrature is then exact.
    static QuadratureSet all_steps(const GridSpec& grid, int last_step);
    /// About `nodes` strata on [0, t_max), with widths growing quadratically
    /// away from each anchor step so the (t - r)^{-1/2} peak is resolved.
    static QuadratureSet graded(const GridSpec& grid, std::span<const int> anchor_steps,
                                int nodes = 64);

    std::size_t size() const { return r_steps.size(); }
    double total_time() const;
};

/// D^{(k)}_{r,v} u_i(t_n, x_m) for all quadrature nodes, at one time slice.
/// Layout [q][v][k][m][i]; nodes born after t_n hold zeros.
struct DerivativeSlab {
    GridSpec grid;
    int dim = 1;
    int n = 0;
    QuadratureSet quad;
    std::vector<double> values;

    std::size_t field_size() const { return static_cast<std::size_t>(grid.sites()) * dim; }
    const double* field(std::size_t q, int v, int k) const {
        return values.data() + ((q * grid.sites() + v) * dim + k) * field_size();
    }
    double at(std::size_t q, int v, int k, int m, int i) const { return field(q, v, k)[m * dim + i]; }
};

/// Evolves the first-order derivative along a stored path:
///   D^{n+1} = D^n + dt Lap D^n + dt Db(u^n) D^n + sum_j Dsigma_.j(u^n) D^n xi^n_j sqrt(dt / c_m)
/// with D born at step r as sigma_.k(u^r(v)) / c_v at site v.
class DerivativePropagator {
public:
    DerivativePropagator(const Trajectory& path, const CoefficientModel& model, QuadratureSet quad);
    /// Steps forward until the slab describes time slice n.
    void advance_to(int n);
    const DerivativeSlab& slab() const { return slab_; }

private:
    const Trajectory& path_;
    const CoefficientModel& model_;
    DerivativeSlab slab_;
    std::vector<double> scratch_;
};

/// Propagates to slice n_final (the path's last slice when negative).
DerivativeSlab propagate_derivatives(const Trajectory& path, const CoefficientModel& model,
                                     const QuadratureSet& quad, int n_final = -1);

struct MalliavinMatrix {
    Eigen::MatrixXd gamma;
    std::size_t quadrature_nodes = 0;

    /// Smallest eigenvalue is >= -tol * trace and the matrix is symmetric.
    bool is_psd(double tol = 1e-10) const;
    Eigen::VectorXd eigenvalues() const;
};

/// Gram matrix of (D u_i(t_n, x_m))_i under the slab's quadrature.
MalliavinMatrix one_point_matrix(const DerivativeSlab& slab, int m);

/// Malliavin matrix of Z = (u(s,y), u(t,x) - u(s,y)) with four d x d blocs:
/// (1) top-left for u(s,y), (2) top-right and (3) bottom-left cross terms,
/// (4) bottom-right for the increment.
struct TwoPointMatrix {
    int dim = 1;
    Eigen::MatrixXd gamma;
    int n_s = 0, m_s = 0, n_t = 0, m_t = 0;

    Eigen::MatrixXd bloc(int which) const;
    /// Mean |entry| over the d x d entries of a bloc.
    double mean_abs(int which) const;
    bool is_psd(double tol = 1e-10) const;
};

/// Two-point matrix from slabs at the earlier (s) and later (t) slices,
/// both built on the same quadrature set.
TwoPointMatrix two_point_matrix(const DerivativeSlab& at_s, int m_s, const DerivativeSlab& at_t,
                                int m_t);

/// Converts a Gram matrix of (u(s,y), u(t,x)) into the matrix of
/// (u(s,y), u(t,x) - u(s,y)).
TwoPointMatrix increment_form(const Eigen::MatrixXd& joint, int dim);

/// Finite-difference derivative of u_i(t_n, x_m) with respect to the
/// white-noise mass of cell (step n_star, site m_star, channel j_star):
/// bump xi by h, re-simulate, divide by h sqrt(dt c_{m_star}).
double bump_derivative(const Trajectory& path, const CoefficientModel& model, int n_star,
                       int m_star, int j_star, double h, int n, int m, int i);

// ---------------------------------------------------------------------------
// Scaling experiments on the exact discrete Gram matrices.

enum class OffsetFamily { time, space, mixed };
std::string to_string(OffsetFamily f);

/// Partner point (s, y) of the fixed anchor (t, x).
struct Partner {
    OffsetFamily family = OffsetFamily::mixed;
    double nominal = 0.0;  // requested parabolic distance
    int n = 0;
    int m = 0;
    double delta = 0.0;  // |t - s|^{1/2} + |x - y| after rounding to the grid
};

/// Partners at parabolic distances `deltas` from (t, x): pure time offsets
/// s = t - delta^2, pure space offsets y = x + delta, and mixed offsets
/// splitting delta evenly between the two.
std::vector<Partner> anchor_ladder(const GridSpec& grid, double t, double x,
                                   std::span<const double> deltas,
                                   std::span<const OffsetFamily> families);

/// Exact discrete Gram matrices for one path by a backward (adjoint) sweep.
/// Returns one TwoPointMatrix per partner, anchor (t_{n_t}, x_{m_t}).
std::vector<TwoPointMatrix> adjoint_two_point(const GridSpec& grid, const CoefficientModel& model,
                                              const RngSpec& rng, std::uint64_t path, int n_t,
                                              int m_t, std::span<const Partner> partners);

struct PartnerStats {
    Partner partner;
    double bloc_mean[4] = {0, 0, 0, 0};  // mean over paths of mean |entry|, blocs (1)..(4)
    double bloc_stderr[4] = {0, 0, 0, 0};
    double lambda_min_mean = 0.0, lambda_min_stderr = 0.0;
    double topd_mean = 0.0, topd_stderr = 0.0;  // product of the d largest eigenvalues
    double derivative_norm_mean = 0.0;          // mean ||D u_i(s,y)||^2 over i and paths
    std::size_t non_psd = 0;
};

struct ScalingRun {
    std::size_t n_paths = 0;
    std::vector<PartnerStats> partners;
};

/// Runs n_paths paths through adjoint_two_point and aggregates per partner.
ScalingRun scaling_run(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                       std::size_t n_paths, double t, double x, std::span<const Partner> partners,
                       int threads = 1);

struct BlocFits {
    ScalingFit bloc1, bloc23, bloc4;
};
struct EigenFits {
    ScalingFit lambda_min, topd;
};

/// Slopes of log(mean |bloc entry|) against log(delta) for one family.
BlocFits bloc_scaling(const ScalingRun& run, OffsetFamily family);
/// Slopes of log E[lambda_min] and log E[top-d product] against log(delta).
EigenFits eigen_scaling(const ScalingRun& run, OffsetFamily family);
/// Slope of the mean squared derivative norm at the partner point.
ScalingFit derivative_norm_scaling(const ScalingRun& run, OffsetFamily family);

}  // namespace heatprobe::malliavin
