#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "heatprobe/fit.hpp"
#include "heatprobe/grid.hpp"
#include "heatprobe/model.hpp"
#include "heatprobe/parallel.hpp"
#include "heatprobe/rng.hpp"

namespace heatprobe {

/// One simulated path. Values are laid out [n][m][i] with n = 0..nt,
/// m = 0..nx; retained noise (standard normals) is laid out [n][m][j] for
/// n = 0..nt-1.
struct Trajectory {
    GridSpec grid;
    int dim = 1;
    std::uint64_t path_index = 0;
    std::vector<double> values;
    std::vector<double> noise;

    bool has_noise() const { return !noise.empty(); }
    double at(int n, int m, int i) const {
        return values[(static_cast<std::size_t>(n) * grid.sites() + m) * dim + i];
    }
    double xi(int n, int m, int j) const {
        return noise[(static_cast<std::size_t>(n) * grid.sites() + m) * dim + j];
    }
    std::span<const double> slice(int n) const {
        const std::size_t len = static_cast<std::size_t>(grid.sites()) * dim;
        return {values.data() + n * len, len};
    }
};

/// Values above this magnitude abort a path with BlowUpError.
inline constexpr double kBlowUpThreshold = 1e8;

/// Explicit Euler-Maruyama stepper for one path. State layout is [m][i].
///
/// u_i(m) += dt * (Lap u_i)(m) + dt * b_i(u(m)) + sum_j sigma_ij(u(m)) xi_j(m) sqrt(dt / c_m)
///
/// where c_m is the trapezoid cell measure of node m (GridSpec::cell), so
/// xi_j(m) sqrt(dt c_m) is the Brownian-sheet mass of the cell.
class Stepper {
public:
    Stepper(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
            std::uint64_t path);

    /// Advances one step with noise drawn from the counter-based field.
    void step();
    /// Advances one step with caller-supplied standard normals [m][j].
    void step(std::span<const double> xi);

    int n() const { return n_; }
    double time() const { return n_ * grid_.dt; }
    std::span<const double> state() const { return cur_; }
    /// Normals used by the most recent step.
    std::span<const double> last_noise() const { return xi_; }
    const GridSpec& grid() const { return grid_; }

private:
    GridSpec grid_;
    const CoefficientModel& model_;
    NoiseField field_;
    std::uint64_t path_;
    int n_ = 0;
    std::vector<double> cur_, next_, xi_, sig_, drift_, scale_;
    bool additive_;
};

/// Simulates path `path_index` from u(0, .) = 0 up to grid.T.
Trajectory simulate(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                    std::uint64_t path_index, bool retain_noise = false);

/// Replays the scheme with the given normals ([n][m][j], nt * sites * d values).
Trajectory simulate_with_noise(const GridSpec& grid, const CoefficientModel& model,
                               std::span<const double> noise, std::uint64_t path_index = 0);

/// Streams a path without storing it; visit(n, state) sees every slice
/// including n = 0. Returning false stops the path early.
void run_path(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
              std::uint64_t path,
              const std::function<bool(int, std::span<const double>)>& visit);

/// Evaluates fn(path) for path = first .. first + n_paths - 1 in parallel;
/// row k of the result belongs to path first + k.
std::vector<std::vector<double>> map_paths(
    std::size_t n_paths, int threads, const std::function<std::vector<double>(std::uint64_t)>& fn,
    std::uint64_t first = 0);

/// State of the scheme after `steps` steps from u(0, .) = 0, for an additive
/// model (sigma constant, b = 0). The state is then Gaussian and diagonal in
/// the cosine (Neumann) or sine (Dirichlet) eigenbasis of the lattice
/// Laplacian, so it is drawn directly in O(nx log nx) instead of stepping.
struct AdditiveSlice {
    int nx = 0;
    int dim = 1;
    long long steps = 0;
    double time = 0.0;           // steps * dt
    std::vector<double> values;  // [m][i]
};

/// The linear map behind sample_additive_slice: `normals` holds (nx + 1) * d
/// standard normals laid out [mode][j]; ratio = dt / dx^2.
AdditiveSlice additive_slice_from_normals(int nx, Boundary boundary, double ratio, long long steps,
                                          const CoefficientModel& model,
                                          std::span<const double> normals);

/// Draws the slice nearest to time t. The normals come from step counter
/// 2^32 - 1 of the path's noise stream, so the draw has the law of
/// simulate()'s slice but is not the same realization.
AdditiveSlice sample_additive_slice(int nx, Boundary boundary, double ratio, double t,
                                    const CoefficientModel& model, const RngSpec& rng,
                                    std::uint64_t path);

/// Point value u_i(t_n, x_m), or the increment u_i(t_n, x_m) - u_i(t_n0, x_m0).
struct Observable {
    std::string label;
    int component = 0;
    int n = 0;
    int m = 0;
    int n0 = -1;
    int m0 = -1;

    static Observable point(int n, int m, int component = 0);
    static Observable increment(int n, int m, int n0, int m0, int component = 0);
    bool is_increment() const { return n0 >= 0; }
};

struct EnsembleResult {
    std::vector<Observable> observables;
    std::size_t n_paths = 0;
    std::vector<double> samples;  // [path][observable]
    std::vector<SampleSummary> summaries;

    std::vector<double> column(std::size_t k) const;
};

/// Runs n_paths independent paths and records the observables. The result
/// is bit-identical for any thread count.
EnsembleResult ensemble_run(const GridSpec& grid, const CoefficientModel& model,
                            const RngSpec& rng, std::size_t n_paths,
                            std::vector<Observable> observables, int threads = 1);

enum class LagMode { time, space };

struct MomentScaling {
    ScalingFit fit;
    std::vector<double> lags;  // realized on the grid
    std::vector<double> moments;
    std::vector<double> moment_stderr;
};

/// Empirical E|u_i(t,x) - u_i(s,y)|^p against lag, where (s,y) = (t - lag, x)
/// for time lags and (t, x + lag) for space lags, all rounded to the grid.
MomentScaling moment_scaling(std::span<const Trajectory> ensemble, double p, LagMode mode,
                             double t, double x, std::span<const double> lags, int component = 0);

/// Streaming variant of moment_scaling that never stores whole paths.
MomentScaling holder_run(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                         std::size_t n_paths, double p, LagMode mode, double t, double x,
                         std::span<const double> lags, int component = 0, int threads = 1);

}  // namespace heatprobe
