#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heatprobe/fit.hpp"
#include "heatprobe/potential.hpp"
#include "heatprobe/solver.hpp"

namespace heatprobe::stats {

// ---------------------------------------------------------------- densities

/// Uniform tensor grid; axis j has count[j] nodes from lo[j] to hi[j].
struct EvalGrid {
    std::vector<double> lo, hi;
    std::vector<int> count;

    int dim() const { return static_cast<int>(count.size()); }
    std::size_t size() const;
    double step(int axis) const { return (hi[axis] - lo[axis]) / (count[axis] - 1); }
    /// Coordinates of flat node k (axis 0 varies slowest).
    void point(std::size_t k, std::span<double> out) const;
    /// Tensor trapezoid weight of node k.
    double weight(std::size_t k) const;
};

/// Box reaching `pad` bandwidths beyond the sample range on every axis.
/// points_per_axis <= 0 picks 401, 121 or 41 for d = 1, 2, 3.
EvalGrid auto_grid(std::span<const double> samples, int dim, std::span<const double> bandwidth,
                   int points_per_axis = 0, double pad = 6.0);

/// Per-axis Silverman rule h_j = s_j (4 / ((d + 2) n))^{1 / (d + 4)}.
std::vector<double> silverman_bandwidth(std::span<const double> samples, int dim);

struct KdeEstimate {
    int dim = 1;
    EvalGrid grid;
    std::vector<double> values;
    std::vector<double> bandwidth;
    std::size_t n_samples = 0;
    double mass = 0.0;  // grid quadrature of values

    double peak() const;
    std::size_t argmax() const;
};

/// Gaussian product-kernel estimate on the grid; samples are laid out
/// [sample][axis]. An empty bandwidth means Silverman's rule. Throws
/// ContractError for fewer than 500 samples, dim outside 1..3, or a grid
/// carrying a mass outside [0.99, 1.01].
KdeEstimate kde_density(std::span<const double> samples, int dim, const EvalGrid& grid,
                        std::span<const double> bandwidth = {}, int threads = 1);

/// kde_density on auto_grid with the Silverman bandwidth.
KdeEstimate kde_density(std::span<const double> samples, int dim, int threads = 1);

struct DensityBoundOptions {
    std::vector<double> t_list{0.25, 0.5};
    std::vector<double> x_list{0.3, 0.5, 0.7};
    std::size_t n_samples = 10000;
    double fit_floor = 1e-3;  // lower-bound fit uses nodes with KDE >= floor * peak
    double spread_limit = 0.25;
    double c_margin = 1e-2;   // lower-bound verdict needs c >= c_margin
    int threads = 1;
};

struct DensitySite {
    double t = 0.0, x = 0.0;
    double peak = 0.0;
    double sample_sd = 0.0;  // sqrt of the mean component variance
    double c_fit = 0.0;      // largest c of the lower envelope at this site
    double tail_ratio = 0.0; // KDE at 6 sd along axis 0, over the peak
};

struct DensityBoundReport {
    std::vector<DensitySite> sites;
    double max_peak = 0.0, min_peak = 0.0;
    double spread = 0.0;  // (max - min) / min over sites
    bool bounded = false;
    double c_lower = 0.0;  // min over sites
    bool lower_ok = false;
};

/// Upper bound: the KDE peaks over all (t, x) stay within spread_limit of
/// each other. Lower bound: the largest c with
///   KDE(z) >= c t^{-d/4} exp(-|z|^2 / (c t^{1/2}))
/// on every evaluation node above the fit floor, at every site.
DensityBoundReport density_bound_check(const GridSpec& grid, const CoefficientModel& model,
                                       const RngSpec& rng, const DensityBoundOptions& opt);

/// Largest c in (0, c_max] satisfying the lower envelope on the given nodes
/// (the envelope is increasing in c); 0 when no positive c works.
double fit_lower_envelope(const KdeEstimate& kde, double t, double floor_fraction,
                          double c_max = 1e6);

enum class CollapseMode { space, mixed };

struct CollapseOptions {
    double t = 0.5, x = 0.25;
    std::vector<double> offsets;  // spatial offsets delta; mixed adds a time lag delta^2
    CollapseMode mode = CollapseMode::space;
    std::size_t n_samples = 10000;
    double ratio_limit = 2.0;
    int threads = 1;
};

struct CollapseScale {
    double offset = 0.0;
    double delta = 0.0;  // realized parabolic distance
    double rescaled_variance = 0.0;
    double sup_density = 0.0;
};

struct CollapseReport {
    std::vector<CollapseScale> scales;
    double span_decades = 0.0;
    double ratio = 0.0;  // max / min sup density
    bool collapsed = false;
    ScalingFit sup_fit;  // sup density against delta; exponent 0 under eta = 0 scaling
};

/// Densities of (u(t, x + delta) - u(s, x)) / Delta^{1/2} with s = t (space)
/// or s = t - delta^2 (mixed), Delta the parabolic distance of the pair.
/// Needs offsets spanning >= 1.5 decades and no zero offset.
CollapseReport increment_collapse(const GridSpec& grid, const CoefficientModel& model,
                                  const RngSpec& rng, const CollapseOptions& opt);

// ---------------------------------------------------------------- hitting

struct Target {
    enum class Kind { ball, box };
    Kind kind = Kind::ball;
    std::vector<double> centre;  // ball
    double radius = 0.0;
    std::vector<double> lo, hi;  // box

    static Target ball(std::vector<double> centre, double radius);
    static Target box(std::vector<double> lo, std::vector<double> hi);
    bool contains(const double* u) const;
    int dim() const;
    /// Radius, or the smallest half-width of a box.
    double inner_size() const;
    std::string describe() const;
};

/// Time window I = [t0, t1] and space window J = [x0, x1]; a degenerate
/// window (t0 = t1 or x0 = x1) selects the nearest slice or site.
struct HitWindow {
    double t0 = 0.25, t1 = 0.5;
    double x0 = 0.25, x1 = 0.75;
};

struct Interval {
    double lo = 0.0, hi = 1.0;
};

inline constexpr double kWilsonZ95 = 1.959963984540054;

/// Two-sided Wilson score interval for k successes in n trials.
Interval wilson_interval(std::size_t k, std::size_t n, double z = kWilsonZ95);

struct HitReport {
    Target target;
    std::size_t hits = 0;
    std::size_t n_paths = 0;
    double estimate = 0.0;
    Interval ci;
    double zero_hit_upper = 0.0;  // exact one-sided 95% bound 1 - 0.05^{1/n}, used when hits = 0
    int nx = 0;
    double dt = 0.0;
    double noise_floor = 0.0;  // 2 x RMS one-cell increment over the window
    bool resolution_warning = false;
};

/// Fraction of paths with some window node inside each target; all targets
/// are scored on the same ensemble, so nested targets give ordered estimates.
std::vector<HitReport> hit_probability(const GridSpec& grid, const CoefficientModel& model,
                                       const RngSpec& rng, std::size_t n_paths,
                                       const HitWindow& window, std::span<const Target> targets,
                                       int threads = 1);

enum class SandwichVariant { space_time, fixed_t, fixed_x };

struct SandwichOptions {
    SandwichVariant variant = SandwichVariant::space_time;
    std::vector<double> z;  // zeros when empty
    std::vector<double> radii{0.05, 0.1, 0.2, 0.4};
    HitWindow window;  // fixed_t uses window.t1, fixed_x uses window.x0
    std::size_t n_paths = 1000;
    double eta = 0.05;
    int mesh_per_radius = 6;   // ball mesh spacing r / mesh_per_radius
    double cover_factor = 1.0; // cover scale epsilon = cover_factor * r
    int threads = 1;
};

struct SandwichRow {
    double radius = 0.0;
    HitReport hit;
    double capacity = 0.0;
    double cover_value = 0.0;
    bool cover_infinite = false;
};

struct SandwichReport {
    SandwichVariant variant = SandwichVariant::space_time;
    int dim = 1;
    double lower_index = 0.0, upper_index = 0.0;
    std::vector<SandwichRow> rows;
    double min_over_max = 0.0;  // over hit estimates
    // log-log slopes in r; NaN when the quantity is not positive and finite
    // across the ladder
    double hit_slope = std::numeric_limits<double>::quiet_NaN();
    double capacity_slope = std::numeric_limits<double>::quiet_NaN();
    double cover_slope = std::numeric_limits<double>::quiet_NaN();
};

/// Capacity/measure indices of the three hitting sandwiches for balls:
/// space_time (d - 6 + eta, d - 6 - eta), fixed_t (d - 2, d - 2 - eta) and
/// fixed_x (d - 4 + eta, d - 4 - eta).
std::pair<double, double> sandwich_indices(SandwichVariant variant, int d, double eta);

SandwichReport sandwich_experiment(const GridSpec& grid, const CoefficientModel& model,
                                   const RngSpec& rng, const SandwichOptions& opt);

// ---------------------------------------------------------------- level sets

struct LevelSetOptions {
    HitWindow window{0.0, 1e300, 0.0, 1.0};  // every node by default
    int section_step = -1;  // fixed-t section; last slice when negative
    int section_site = -1;  // fixed-x section; middle site when negative
};

/// Nodes with |u(t_n, x_m) - z| <= tolerance and the derived sets:
/// T and X (projections onto the time and space axes), L_x (the section at
/// section_site) and L^t (the section at section_step).
struct LevelSetSample {
    std::vector<double> z;
    double tolerance = 0.0;
    std::vector<std::pair<int, int>> nodes;  // (n, m)
    std::vector<int> time_projection;        // distinct n
    std::vector<int> space_projection;       // distinct m
    int section_step = 0, section_site = 0;
    std::vector<int> fixed_x_section;  // n with (n, section_site) in the set
    std::vector<int> fixed_t_section;  // m with (section_step, m) in the set
};

bool in_level_set(const Trajectory& traj, int n, int m, std::span<const double> z,
                  double tolerance);

LevelSetSample level_set(const Trajectory& traj, std::span<const double> z, double tolerance,
                         const LevelSetOptions& opt = {});

/// RMS of |u(t_n, x_{m+1}) - u(t_n, x_m)| over slices n >= 1.
double cell_increment_rms(const Trajectory& traj);

/// Default level-set tolerance: 2 x cell_increment_rms.
double default_level_tolerance(const Trajectory& traj);

// ---------------------------------------------------------------- dimensions

enum class RandomSet {
    range_tx, range_x, range_t,
    levelset_L, levelset_T, levelset_X, levelset_Lx, levelset_Lt
};

struct Prediction {
    double dimension = 0.0;
    double codimension = 0.0;
    int ambient = 1;  // 3 for the time-space level set under the parabolic metric
    bool covered = false;
    std::string regime;
};

/// Dimension and codimension of each random set, with the range of d for
/// which the dimension statement holds.
Prediction predict(RandomSet which, int d);

struct DimensionOptions {
    std::size_t n_paths = 10;
    std::vector<double> z;  // level; zeros when empty
    double t = -1.0;        // fixed-t slice; grid.T when negative
    double x = 0.5;         // fixed-x site
    HitWindow window{-1.0, -1.0, 0.0, 1.0};  // I defaults to [T/4, T]; J to the interior
    std::vector<double> scales;
    int trim = 2;
    double tolerance_factor = 0.5;  // level-set tolerance in one-step increment RMS
    std::size_t min_points = 100;
    double identity_tolerance = 0.3;
    /// Fixed-t sets of additive models: draw the slice directly at
    /// direct_nx (see sample_additive_slice) instead of stepping.
    bool direct_slice = false;
    int direct_nx = 0;
    int threads = 1;
};

struct DimensionReport {
    RandomSet which = RandomSet::range_x;
    int d = 1;
    Prediction prediction;
    bool fitted = false;
    std::string note;  // "empty on this path" etc. when not fitted
    potential::BoxCount box;  // counts averaged over the pooled paths
    double measured = 0.0;
    double identity_sum = 0.0;  // measured + codimension
    bool identity_ok = false;
    std::size_t paths_used = 0, paths_empty = 0, paths_sparse = 0;
    std::size_t mean_points = 0;
};

/// Box-counting dimension of the chosen set, pooled over paths whose set has
/// at least min_points points; parabolic metric for the time-space level set.
DimensionReport dimension_report(const GridSpec& grid, const CoefficientModel& model,
                                 const RngSpec& rng, RandomSet which,
                                 const DimensionOptions& opt);

/// 2^{-k0}, 2^{-k0 - step}, ..., 2^{-k1}.
std::vector<double> dyadic_scales(double k0, double k1, double step = 1.0);

std::string to_string(RandomSet which);
RandomSet parse_random_set(const std::string& name);
std::string to_string(SandwichVariant v);
SandwichVariant parse_sandwich_variant(const std::string& name);
std::string to_string(CollapseMode m);
CollapseMode parse_collapse_mode(const std::string& name);

}  // namespace heatprobe::stats
