#include "heatprobe/grid.hpp"

#include <cmath>
#include <sstream>

#include "heatprobe/error.hpp"

namespace heatprobe {

GridSpec GridSpec::with_ratio(int nx, double T, double ratio, Boundary boundary) {
    if (nx < 2) throw ConfigError("grid needs nx >= 2");
    if (!(T > 0.0)) throw ConfigError("grid horizon T must be positive");
    if (!(ratio > 0.0) || ratio > 0.5) throw ConfigError("dt / dx^2 ratio must lie in (0, 1/2]");
    const double target = ratio / (double(nx) * nx);
    const double steps = std::ceil(T / target - 1e-9);
    GridSpec g{nx, T, T / steps, boundary};
    g.validate();
    return g;
}

int GridSpec::nt() const { return static_cast<int>(std::llround(T / dt)); }

int GridSpec::step_of(double time) const { return static_cast<int>(std::llround(time / dt)); }

int GridSpec::site_of(double pos) const { return static_cast<int>(std::llround(pos * nx)); }

void GridSpec::validate() const {
    std::ostringstream msg;
    if (nx < 2) msg << "nx must be >= 2 (got " << nx << ")";
    else if (!(T > 0.0)) msg << "T must be positive (got " << T << ")";
    else if (!(dt > 0.0)) msg << "dt must be positive (got " << dt << ")";
    else if (dt > 0.5 * dx() * dx() * (1.0 + 1e-12))
        msg << "dt=" << dt << " exceeds the explicit stability limit dx^2/2=" << 0.5 * dx() * dx();
    else if (nt() < 1 || std::abs(nt() * dt - T) > 1e-12)
        msg << "T=" << T << " is not an integer multiple of dt=" << dt;
    if (!msg.str().empty()) throw ConfigError(msg.str());
}

}  // namespace heatprobe
