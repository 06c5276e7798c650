#pragma once

// Fixed verification procedures behind several runners and the acceptance
// binary. They measure; callers decide verdicts.

#include <cstdint>
#include <string>
#include <vector>

#include "heatprobe/kernel.hpp"
#include "heatprobe/model.hpp"
#include "heatprobe/solver.hpp"

namespace heatprobe::app::checks {

/// One line of a check table: check,t,x,y,value,bound,pass.
struct Row {
    std::string check;
    double t = 0.0, x = 0.0, y = 0.0;
    double value = 0.0, bound = 0.0;
    bool pass = true;
};

// ---------------------------------------------------------------- kernel

struct KernelLatticeOptions {
    kernel::Boundary boundary = kernel::Boundary::neumann;
    double truncation_tol = 1e-12;
    int n_t = 50;    // log-spaced times in [t_min, t_max]
    int n_xy = 100;  // uniform x and y in [0, 1]
    double t_min = 1e-6, t_max = 10.0;
    double mass_tol = 1e-8;
    double agreement_tol = 1e-10;
    double semigroup_tol = 1e-6;
    int semigroup_random = 60;
    std::uint64_t seed = 11;
    int threads = 1;
};

struct KernelLatticeResult {
    std::vector<Row> rows;  // one row per lattice time and check, plus the semigroup cases
    double min_positive = 0.0;       // smallest value where the leading term is representable
    bool nonnegative = true;
    double max_asymmetry = 0.0;
    double max_agreement = 0.0;      // |cosine series - image sum|
    double max_mass_error = 0.0;     // neumann only
    double max_semigroup = 0.0;      // scaled residual
    double envelope_constant = 0.0;  // max G / ((2 pi t)^{-1/2} exp(-|x-y|^2 / 2t)), t >= 1e-3
};

KernelLatticeResult kernel_lattice(const KernelLatticeOptions& opt);

struct SmallTimeResult {
    std::vector<Row> rows;
    double min_local_lower = 0.0;  // over eps in [1e-4, 1e-2]
    double max_l2q_spread = 0.0;   // max / min - 1 over three decades, worst q
    double l2q_q1_max = 0.0;
    double max_window_ratio = 0.0;  // l2_window / ((b - a) / (sqrt b + sqrt a))
};

SmallTimeResult kernel_small_time(kernel::Boundary boundary);

// ---------------------------------------------------------------- potential

struct CapacityChecks {
    std::vector<Row> rows;
    double negative_index_error = 0.0;  // max |Cap - 1| for beta < 0
    double singleton_ratio = 0.0;       // Cap(h / 2) / Cap(h), beta = 1
    double two_atom_error = 0.0;        // relative, against a scan of the weight
    double max_gap = 0.0;
    int monotone_pairs = 0;
    int monotone_violations = 0;
};

CapacityChecks capacity_checks(std::uint64_t seed, int pairs = 50, int threads = 1);

struct HausdorffChecks {
    std::vector<Row> rows;
    double unit_min = 0.0, unit_max = 0.0;  // [0, 1] at beta = 1, eps in {1/64, 1/128, 1/256}
    bool below_increasing = false;          // beta = 0.8 as eps runs 1/16, 1/32, 1/64
    bool above_decreasing = false;          // beta = 1.2
    bool negative_infinite = false;
};

HausdorffChecks hausdorff_checks();

// ---------------------------------------------------------------- solver

struct LinearOracle {
    std::size_t variance_paths = 0, kde_samples = 0;
    double t = 0.0, x = 0.0;
    double variance = 0.0, stderr_variance = 0.0;
    double oracle = 0.0;  // kernel quadrature variance
    double kde_peak = 0.0;
    double sup_distance = 0.0;  // max over the KDE grid of |KDE - N(0, oracle)|
    std::vector<double> z, kde, exact;
};

/// sigma = 1, b = 0, d = 1 at (grid.T, x): variance from the first
/// variance_paths paths, KDE from kde_samples paths.
LinearOracle linear_gaussian_oracle(const GridSpec& grid, const RngSpec& rng,
                                    std::size_t variance_paths, std::size_t kde_samples, double x,
                                    int threads);

// ---------------------------------------------------------------- malliavin

struct BumpCase {
    std::string model;
    std::uint64_t path = 0;
    int n_star = 0, m_star = 0, k = 0, n = 0, m = 0, i = 0;
    double bump = 0.0, propagated = 0.0, error = 0.0;
};

struct BumpChecks {
    std::vector<BumpCase> cases;
    double constant_max_error = 0.0;  // relative, constant sigma, bump 1
    double model_max_error = 0.0;     // relative to the diagonal scale, bump h
};

/// Finite-difference derivatives against the propagated ones for noise
/// born at (T/2, x_{nx/2}) and observed at time T near the same site.
BumpChecks bump_checks(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                       std::size_t n_paths, double h, int threads);

struct GammaChecks {
    double c = 0.0;               // kernel quadrature value of the linear diagonal
    double max_rel_error = 0.0;   // diagonal of the linear one-point matrix
    double max_offdiag = 0.0;
    std::size_t checked = 0;      // matrices tested for PSD
    std::size_t non_psd = 0;
    double min_det = 0.0;         // over one-point matrices of the model
    std::vector<double> diagonal;
};

/// Linear one-point matrix at (T, x) with `nodes` graded r-nodes, and PSD
/// checks of one- and two-point matrices of the model on n_paths paths.
GammaChecks gamma_checks(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                         std::size_t n_paths, double x, int nodes, int threads);

}  // namespace heatprobe::app::checks
