#pragma once

#include "heatprobe/kernel.hpp"

namespace heatprobe {

using kernel::Boundary;

/// Space-time grid on [0, T] x [0, 1]; nodes x_m = m / nx for m = 0..nx.
struct GridSpec {
    int nx = 64;
    double T = 0.5;
    double dt = 0.0;
    Boundary boundary = Boundary::neumann;

    /// Chooses the largest dt <= ratio * dx^2 that divides T evenly.
    static GridSpec with_ratio(int nx, double T, double ratio = 0.25,
                               Boundary boundary = Boundary::neumann);

    int nt() const;
    int sites() const { return nx + 1; }
    double dx() const { return 1.0 / nx; }
    double x(int m) const { return static_cast<double>(m) / nx; }
    double t(int n) const { return n * dt; }
    /// Trapezoid cell measure of node m: dx inside, dx/2 at the two ends.
    double cell(int m) const { return (m == 0 || m == nx) ? 0.5 / nx : 1.0 / nx; }
    /// Nearest time step / site to a continuous coordinate.
    int step_of(double time) const;
    int site_of(double pos) const;

    /// Throws ConfigError unless dt <= dx^2 / 2 and T is an integer number of steps.
    void validate() const;
};

}  // namespace heatprobe
