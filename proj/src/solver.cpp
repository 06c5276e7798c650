#include "heatprobe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "heatprobe/error.hpp"

namespace heatprobe {

namespace {

[[noreturn]] void blow_up(int n, int m, std::uint64_t path, double value) {
    std::ostringstream msg;
    msg << "path " << path << " blew up at step " << n << ", site " << m << " (value " << value
        << ")";
    throw BlowUpError(msg.str(), n, m, static_cast<long>(path));
}

}  // namespace

Stepper::Stepper(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                 std::uint64_t path)
    : grid_(grid), model_(model), field_(rng), path_(path) {
    grid_.validate();
    const int d = model.dim();
    const std::size_t len = static_cast<std::size_t>(grid_.sites()) * d;
    cur_.assign(len, 0.0);
    next_.assign(len, 0.0);
    xi_.assign(len, 0.0);
    sig_.assign(d * d, 0.0);
    drift_.assign(d, 0.0);
    scale_.resize(grid_.sites());
    for (int m = 0; m < grid_.sites(); ++m) scale_[m] = std::sqrt(grid_.dt / grid_.cell(m));
    additive_ = model.is_additive();
    if (additive_) model.sigma(cur_, sig_);
}

void Stepper::step() {
    field_.fill_step(path_, static_cast<std::uint32_t>(n_), grid_.sites(), model_.dim(), xi_);
    step(std::span<const double>(xi_));
}

void Stepper::step(std::span<const double> xi) {
    const int d = model_.dim();
    const int nx = grid_.nx;
    if (xi.size() != cur_.size()) throw ContractError("noise slice has the wrong length");
    if (xi.data() != xi_.data()) std::copy(xi.begin(), xi.end(), xi_.begin());
    const double dt = grid_.dt;
    const double lap = dt * double(nx) * nx;
    const bool dirichlet = grid_.boundary == Boundary::dirichlet;
    const double* u = cur_.data();

    for (int m = 0; m <= nx; ++m) {
        double* out = &next_[m * d];
        if (dirichlet && (m == 0 || m == nx)) {
            std::fill(out, out + d, 0.0);
            continue;
        }
        // mirrored ghost nodes u(-1) = u(1), u(nx+1) = u(nx-1)
        const int left = m == 0 ? 1 : m - 1;
        const int right = m == nx ? nx - 1 : m + 1;
        const std::span<const double> here(u + m * d, d);
        if (!additive_) model_.coefficients(here, sig_, drift_);
        const double* z = &xi_[m * d];
        for (int i = 0; i < d; ++i) {
            double noise = 0.0;
            for (int j = 0; j < d; ++j) noise += sig_[i * d + j] * z[j];
            double v = here[i] + lap * (u[left * d + i] - 2.0 * here[i] + u[right * d + i]) +
                       noise * scale_[m];
            if (!additive_) v += dt * drift_[i];
            if (!(std::abs(v) <= kBlowUpThreshold)) blow_up(n_ + 1, m, path_, v);
            out[i] = v;
        }
    }
    cur_.swap(next_);
    ++n_;
}

Trajectory simulate(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                    std::uint64_t path_index, bool retain_noise) {
    Stepper stepper(grid, model, rng, path_index);
    const int nt = grid.nt();
    const std::size_t len = stepper.state().size();
    Trajectory tr{grid, model.dim(), path_index, {}, {}};
    tr.values.resize(len * (nt + 1));
    if (retain_noise) tr.noise.resize(len * nt);
    std::copy(stepper.state().begin(), stepper.state().end(), tr.values.begin());
    for (int n = 0; n < nt; ++n) {
        stepper.step();
        std::copy(stepper.state().begin(), stepper.state().end(), tr.values.begin() + len * (n + 1));
        if (retain_noise)
            std::copy(stepper.last_noise().begin(), stepper.last_noise().end(),
                      tr.noise.begin() + len * n);
    }
    return tr;
}

Trajectory simulate_with_noise(const GridSpec& grid, const CoefficientModel& model,
                               std::span<const double> noise, std::uint64_t path_index) {
    Stepper stepper(grid, model, RngSpec{}, path_index);
    const int nt = grid.nt();
    const std::size_t len = stepper.state().size();
    if (noise.size() != len * nt) throw ContractError("noise array does not match the grid");
    Trajectory tr{grid, model.dim(), path_index, {}, {noise.begin(), noise.end()}};
    tr.values.resize(len * (nt + 1));
    for (int n = 0; n < nt; ++n) {
        stepper.step(noise.subspan(len * n, len));
        std::copy(stepper.state().begin(), stepper.state().end(), tr.values.begin() + len * (n + 1));
    }
    return tr;
}

void run_path(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
              std::uint64_t path,
              const std::function<bool(int, std::span<const double>)>& visit) {
    Stepper stepper(grid, model, rng, path);
    if (!visit(0, stepper.state())) return;
    const int nt = grid.nt();
    for (int n = 0; n < nt; ++n) {
        stepper.step();
        if (!visit(n + 1, stepper.state())) return;
    }
}

std::vector<std::vector<double>> map_paths(
    std::size_t n_paths, int threads, const std::function<std::vector<double>(std::uint64_t)>& fn,
    std::uint64_t first) {
    std::vector<std::vector<double>> rows(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t k) { rows[k] = fn(first + k); });
    return rows;
}

namespace {

// y_m = sum_{k=0}^{n} a_k cos(pi k m / n), m = 0..n, through a length-2n FFT
// of the even extension.
std::vector<double> dct1(const std::vector<double>& a, Eigen::FFT<double>& fft) {
    const int n = static_cast<int>(a.size()) - 1;
    std::vector<double> ext(2 * n);
    for (int k = 0; k <= n; ++k) ext[k] = a[k];
    for (int k = 1; k < n; ++k) ext[2 * n - k] = a[k];
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, ext);
    std::vector<double> y(n + 1);
    for (int m = 0; m <= n; ++m)
        y[m] = 0.5 * (spec[m].real() + a[0] + (m % 2 ? -a[n] : a[n]));
    return y;
}

// y_m = sum_{k=1}^{n-1} a_k sin(pi k m / n), m = 0..n (a_0, a_n ignored).
std::vector<double> dst1(const std::vector<double>& a, Eigen::FFT<double>& fft) {
    const int n = static_cast<int>(a.size()) - 1;
    std::vector<double> ext(2 * n, 0.0);
    for (int k = 1; k < n; ++k) {
        ext[k] = a[k];
        ext[2 * n - k] = -a[k];
    }
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, ext);
    std::vector<double> y(n + 1, 0.0);
    for (int m = 1; m < n; ++m) y[m] = -0.5 * spec[m].imag();
    return y;
}

}  // namespace

AdditiveSlice additive_slice_from_normals(int nx, Boundary boundary, double ratio, long long steps,
                                          const CoefficientModel& model,
                                          std::span<const double> normals) {
    if (!model.is_additive()) throw ContractError("direct slice sampling needs an additive model");
    if (nx < 2) throw ConfigError("grid needs nx >= 2");
    if (!(ratio > 0.0) || ratio > 0.5) throw ConfigError("dt / dx^2 ratio must lie in (0, 1/2]");
    if (steps < 0) throw ContractError("step count must be >= 0");
    const int d = model.dim();
    const std::size_t sites = static_cast<std::size_t>(nx) + 1;
    if (normals.size() != sites * d) throw ContractError("normals do not match the grid");
    const double dt = ratio / (double(nx) * nx);
    const bool dirichlet = boundary == Boundary::dirichlet;

    // variance of mode k: dt * sum_{j < steps} lambda_k^{2j}, with the
    // eigenvectors normalized in the trapezoid inner product
    std::vector<double> amp(sites, 0.0);
    for (int k = 0; k <= nx; ++k) {
        if (dirichlet && (k == 0 || k == nx)) continue;
        const double s = std::sin(0.5 * std::numbers::pi * k / nx);
        const double lam2 = std::pow(1.0 - 4.0 * ratio * s * s, 2);
        const double geo = 1.0 - lam2 < 1e-15 ? double(steps)
                                              : -std::expm1(steps * std::log(lam2)) / (1.0 - lam2);
        const double norm = (k == 0 || k == nx) ? 1.0 : 2.0;
        amp[k] = std::sqrt(dt * norm * (lam2 == 0.0 ? std::min<long long>(steps, 1) : geo));
    }

    Eigen::FFT<double> fft;
    std::vector<double> unit(sites * d);  // identity-noise solution [m][j]
    std::vector<double> a(sites);
    for (int j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < sites; ++k) a[k] = amp[k] * normals[k * d + j];
        const auto y = dirichlet ? dst1(a, fft) : dct1(a, fft);
        for (std::size_t m = 0; m < sites; ++m) unit[m * d + j] = y[m];
    }

    std::vector<double> sig(d * d), zero(d, 0.0);
    model.sigma(zero, sig);
    AdditiveSlice out{nx, d, steps, steps * dt, std::vector<double>(sites * d, 0.0)};
    for (std::size_t m = 0; m < sites; ++m)
        for (int i = 0; i < d; ++i) {
            double v = 0.0;
            for (int j = 0; j < d; ++j) v += sig[i * d + j] * unit[m * d + j];
            out.values[m * d + i] = v;
        }
    return out;
}

AdditiveSlice sample_additive_slice(int nx, Boundary boundary, double ratio, double t,
                                    const CoefficientModel& model, const RngSpec& rng,
                                    std::uint64_t path) {
    if (!(t >= 0.0)) throw ContractError("slice time must be >= 0");
    if (nx < 2) throw ConfigError("grid needs nx >= 2");
    const double dt = ratio / (double(nx) * nx);
    const long long steps = std::llround(t / dt);
    const int d = model.dim();
    std::vector<double> normals((static_cast<std::size_t>(nx) + 1) * d);
    NoiseField(rng).fill_step(path, std::numeric_limits<std::uint32_t>::max(), nx + 1, d, normals);
    return additive_slice_from_normals(nx, boundary, ratio, steps, model, normals);
}

Observable Observable::point(int n, int m, int component) {
    std::ostringstream label;
    label << "u" << component << "(" << n << "," << m << ")";
    return {label.str(), component, n, m, -1, -1};
}

Observable Observable::increment(int n, int m, int n0, int m0, int component) {
    std::ostringstream label;
    label << "u" << component << "(" << n << "," << m << ")-u" << component << "(" << n0 << ","
          << m0 << ")";
    return {label.str(), component, n, m, n0, m0};
}

std::vector<double> EnsembleResult::column(std::size_t k) const {
    const std::size_t width = observables.size();
    std::vector<double> out(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) out[p] = samples[p * width + k];
    return out;
}

EnsembleResult ensemble_run(const GridSpec& grid, const CoefficientModel& model,
                            const RngSpec& rng, std::size_t n_paths,
                            std::vector<Observable> observables, int threads) {
    if (n_paths < 1) throw ContractError("ensemble_run needs n_paths >= 1");
    grid.validate();
    const int nt = grid.nt();
    const int d = model.dim();
    // (step, observable, sign, site) taps sorted by step
    struct Tap {
        int n;
        std::size_t k;
        double sign;
        int m;
    };
    std::vector<Tap> taps;
    int last = 0;
    for (std::size_t k = 0; k < observables.size(); ++k) {
        const auto& o = observables[k];
        const auto check = [&](int n, int m) {
            if (n < 0 || n > nt || m < 0 || m > grid.nx)
                throw ContractError("observable " + o.label + " lies outside the grid");
        };
        if (o.component < 0 || o.component >= d)
            throw ContractError("observable " + o.label + " names a missing component");
        check(o.n, o.m);
        taps.push_back({o.n, k, 1.0, o.m});
        if (o.is_increment()) {
            check(o.n0, o.m0);
            taps.push_back({o.n0, k, -1.0, o.m0});
        }
        last = std::max({last, o.n, o.is_increment() ? o.n0 : 0});
    }
    std::stable_sort(taps.begin(), taps.end(), [](const Tap& a, const Tap& b) { return a.n < b.n; });

    const std::size_t width = observables.size();
    auto rows = map_paths(n_paths, threads, [&](std::uint64_t path) {
        std::vector<double> row(width, 0.0);
        std::size_t next = 0;
        run_path(grid, model, rng, path, [&](int n, std::span<const double> state) {
            for (; next < taps.size() && taps[next].n == n; ++next) {
                const Tap& tp = taps[next];
                row[tp.k] += tp.sign * state[tp.m * d + observables[tp.k].component];
            }
            return n < last;
        });
        return row;
    });

    EnsembleResult res;
    res.observables = std::move(observables);
    res.n_paths = n_paths;
    res.samples.reserve(n_paths * width);
    for (const auto& r : rows) res.samples.insert(res.samples.end(), r.begin(), r.end());
    if (n_paths >= 2)
        for (std::size_t k = 0; k < width; ++k) res.summaries.push_back(summarize(res.column(k)));
    return res;
}

namespace {

struct LagPlan {
    std::vector<Observable> increments;
    std::vector<double> realized;
};

LagPlan plan_lags(const GridSpec& grid, LagMode mode, double t, double x,
                  std::span<const double> lags, int component) {
    if (!(t > 0.0) || t > grid.T + 1e-12 || !(x > 0.0) || !(x < 1.0))
        throw ContractError("moment scaling anchor must be interior");
    const int n = grid.step_of(t);
    const int m = grid.site_of(x);
    LagPlan plan;
    for (double lag : lags) {
        int n0 = n, m0 = m;
        double realized;
        if (mode == LagMode::time) {
            n0 = n - grid.step_of(lag);
            realized = (n - n0) * grid.dt;
        } else {
            m0 = m + grid.site_of(lag);
            realized = (m0 - m) * grid.dx();
        }
        if (realized <= 0.0)
            throw ContractError("lag rounds to zero on the grid; zero lags are excluded");
        if (n0 < 0 || m0 > grid.nx) throw ContractError("lag leaves the grid");
        plan.increments.push_back(Observable::increment(n, m, n0, m0, component));
        plan.realized.push_back(realized);
    }
    return plan;
}

MomentScaling finish(const LagPlan& plan, std::size_t n_paths, double p,
                     const std::function<double(std::size_t, std::size_t)>& increment) {
    MomentScaling out;
    out.lags = plan.realized;
    for (std::size_t k = 0; k < plan.realized.size(); ++k) {
        std::vector<double> powers(n_paths);
        for (std::size_t q = 0; q < n_paths; ++q) powers[q] = std::pow(std::abs(increment(q, k)), p);
        const auto s = summarize(powers);
        out.moments.push_back(s.mean);
        out.moment_stderr.push_back(s.stderr_mean);
    }
    out.fit = fit_power_law(out.lags, out.moments);
    return out;
}

constexpr std::size_t kMinScalingPaths = 100;

}  // namespace

MomentScaling moment_scaling(std::span<const Trajectory> ensemble, double p, LagMode mode,
                             double t, double x, std::span<const double> lags, int component) {
    if (ensemble.size() < kMinScalingPaths)
        throw ContractError("moment scaling needs at least 100 paths");
    if (lags.size() < 3) throw FitError("moment scaling needs at least three lags");
    const GridSpec& grid = ensemble.front().grid;
    const LagPlan plan = plan_lags(grid, mode, t, x, lags, component);
    return finish(plan, ensemble.size(), p, [&](std::size_t q, std::size_t k) {
        const Observable& o = plan.increments[k];
        return ensemble[q].at(o.n, o.m, component) - ensemble[q].at(o.n0, o.m0, component);
    });
}

MomentScaling holder_run(const GridSpec& grid, const CoefficientModel& model, const RngSpec& rng,
                         std::size_t n_paths, double p, LagMode mode, double t, double x,
                         std::span<const double> lags, int component, int threads) {
    if (n_paths < kMinScalingPaths) throw ContractError("moment scaling needs at least 100 paths");
    if (lags.size() < 3) throw FitError("moment scaling needs at least three lags");
    const LagPlan plan = plan_lags(grid, mode, t, x, lags, component);
    const auto res = ensemble_run(grid, model, rng, n_paths, plan.increments, threads);
    const std::size_t width = plan.increments.size();
    return finish(plan, n_paths, p, [&](std::size_t q, std::size_t k) {
        return res.samples[q * width + k];
    });
}

}  // namespace heatprobe
