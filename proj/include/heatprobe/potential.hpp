#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "heatprobe/fit.hpp"

namespace heatprobe::potential {

/// Euclidean distance, or for time-space points (t, x_1, .., x_k)
/// |t - s|^{1/2} + ||x - y||.
enum class Metric { euclidean, parabolic };

/// Flat point cloud: point i occupies coords[i * dim .. i * dim + dim).
/// Under the parabolic metric coordinate 0 is time.
struct PointSet {
    int dim = 1;
    std::vector<double> coords;

    std::size_t size() const { return dim > 0 ? coords.size() / dim : 0; }
    const double* operator[](std::size_t i) const { return coords.data() + i * dim; }
    void push(std::span<const double> p);
};

double distance(Metric metric, const double* a, const double* b, int dim);
double parabolic_distance(double t, double x, double s, double y);
double diameter(const PointSet& pts, Metric metric);

/// K(r) = r^-beta (beta > 0), log(n0 / r) (beta = 0), 1 (beta < 0), with r
/// clamped to cutoff_h / 2 when cutoff_h > 0.
struct RieszKernelSpec {
    double beta = 1.0;
    double n0 = 0.0;  // <= 0: 4 x the diameter of the set it is applied to
    double cutoff_h = 0.0;
};

double riesz_kernel(const RieszKernelSpec& spec, double r);

struct DiscreteMeasure {
    PointSet support;
    std::vector<double> weights;

    /// Throws ContractError unless the weights are >= 0 and sum to 1 +- 1e-12.
    void validate() const;
};

/// Sum_ij w_i w_j K(d(x_i, x_j)). A set-dependent n0 is resolved from the
/// support's diameter.
double energy(const DiscreteMeasure& mu, const RieszKernelSpec& spec,
              Metric metric = Metric::euclidean);

struct CompactSetMesh {
    PointSet points;
    double h = 0.0;  // cell size
    Metric metric = Metric::euclidean;

    int ambient_dim() const { return points.dim; }
};

/// Cell-centred meshes of [0, 1], [0, 1]^2, the closed unit ball of R^k and
/// a time-space rectangle [t0, t1] x [x0, x1] under the parabolic metric.
CompactSetMesh interval_mesh(std::size_t n);
CompactSetMesh square_mesh(std::size_t n_side);
CompactSetMesh ball_mesh(int dim, double radius, double h, std::span<const double> centre = {});
CompactSetMesh parabolic_rectangle(double t0, double t1, double x0, double x1, std::size_t nt,
                                   std::size_t nx);

struct CapacityOptions {
    double tolerance = 1e-6;  // relative duality gap
    long max_iterations = 100000;
    int polish_every = 50;  // Frank-Wolfe steps between KKT polishing attempts
    int threads = 1;
};

struct CapacityResult {
    double capacity = 0.0;
    double energy = 0.0;
    DiscreteMeasure equilibrium;
    double duality_gap = 0.0;  // (E - min_i (K w)_i) * 2 / E at termination
    long iterations = 0;
    double n0 = 0.0;  // the log-kernel constant actually used
};

/// Cap = 1 / min energy over probability weights on the mesh. cutoff_h <= 0
/// in the kernel spec means the mesh cell size.
CapacityResult capacity(const CompactSetMesh& set, RieszKernelSpec spec,
                        const CapacityOptions& opt = {});

struct CoverReport {
    double epsilon = 0.0;
    double beta = 0.0;
    double value = 0.0;  // sum (2 r_i + h)^beta, +inf for beta < 0
    bool infinite = false;
    std::size_t ball_count = 0;
    std::vector<std::size_t> centers;  // mesh indices
    std::vector<double> radii;
};

/// Greedy epsilon-cover: repeatedly centre a ball at the mesh point whose
/// epsilon-ball holds the most uncovered points (lowest index on ties).
/// For beta above the ambient dimension each ball shrinks to the smallest
/// radius still covering the points it claimed. Each mesh point stands for
/// a cell of size h, so a ball of radius r covers a piece of diameter 2r + h.
CoverReport hausdorff_upper(const CompactSetMesh& set, double beta, double epsilon);

struct BoxOptions {
    int trim = 2;  // scales dropped at each end of the ladder before fitting
};

struct BoxCount {
    std::vector<double> scales;
    std::vector<double> counts;
    ScalingFit fit;  // log N against log(1 / eps) on the central window
};

/// Occupied boxes at each scale, in the order given; no preconditions.
std::vector<double> box_counts(const PointSet& pts, Metric metric, std::span<const double> scales);

/// Fit of precomputed counts (e.g. averaged over paths) with the same
/// ordering and trimming rules as box_dimension.
BoxCount fit_box_counts(std::span<const double> scales, std::span<const double> counts,
                        const BoxOptions& opt = {});

/// Box counting with cubes of side eps, or eps^2 (time) x eps (space) under
/// the parabolic metric. Needs >= 100 points and >= 4 scales in the window.
BoxCount box_dimension(const PointSet& pts, Metric metric, std::span<const double> scales,
                       const BoxOptions& opt = {});

}  // namespace heatprobe::potential
