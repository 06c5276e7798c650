#include "heatprobe/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "heatprobe/error.hpp"

namespace heatprobe {

namespace {

constexpr double kJacobianStep = 1e-6;

class ConstantModel final : public CoefficientModel {
public:
    ConstantModel(int dim, std::vector<double> sigma0, std::vector<double> beta0)
        : CoefficientModel(dim), sigma0_(std::move(sigma0)), beta0_(std::move(beta0)) {
        if (static_cast<int>(sigma0_.size()) != dim * dim || static_cast<int>(beta0_.size()) != dim)
            throw ConfigError("constant model: sigma must be d x d and b of length d");
    }
    void sigma(std::span<const double>, std::span<double> out) const override {
        std::copy(sigma0_.begin(), sigma0_.end(), out.begin());
    }
    void drift(std::span<const double>, std::span<double> out) const override {
        std::copy(beta0_.begin(), beta0_.end(), out.begin());
    }
    void sigma_jacobian(std::span<const double>, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    void drift_jacobian(std::span<const double>, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    bool is_additive() const override {
        return std::all_of(beta0_.begin(), beta0_.end(), [](double v) { return v == 0.0; });
    }

private:
    std::vector<double> sigma0_;
    std::vector<double> beta0_;
};

class BoundedSmooth final : public CoefficientModel {
public:
    using CoefficientModel::CoefficientModel;

    void sigma(std::span<const double> u, std::span<double> out) const override {
        const int d = dim();
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                out[i * d + j] = i == j ? 1.0 + 0.5 * std::sin(u[i]) : 0.1 * std::cos(u[i] + u[j]);
    }
    void drift(std::span<const double> u, std::span<double> out) const override {
        for (int i = 0; i < dim(); ++i) out[i] = 0.5 * std::sin(u[i]);
    }
    void sigma_jacobian(std::span<const double> u, std::span<double> out) const override {
        const int d = dim();
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                double* row = &out[(i * d + j) * d];
                if (i == j) {
                    row[i] = 0.5 * std::cos(u[i]);
                } else {
                    const double s = -0.1 * std::sin(u[i] + u[j]);
                    row[i] += s;
                    row[j] += s;
                }
            }
        }
    }
    void drift_jacobian(std::span<const double> u, std::span<double> out) const override {
        const int d = dim();
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < d; ++i) out[i * d + i] = 0.5 * std::cos(u[i]);
    }

    // the hot paths below use sin/cos of the components only:
    // cos(a + b) = cos a cos b - sin a sin b
    void coefficients(std::span<const double> u, std::span<double> sig,
                      std::span<double> b) const override {
        const int d = dim();
        double s[kMaxFast], c[kMaxFast];
        if (d > kMaxFast) return CoefficientModel::coefficients(u, sig, b);
        for (int i = 0; i < d; ++i) {
            s[i] = std::sin(u[i]);
            c[i] = std::cos(u[i]);
        }
        for (int i = 0; i < d; ++i) {
            b[i] = 0.5 * s[i];
            for (int j = 0; j < d; ++j)
                sig[i * d + j] = i == j ? 1.0 + 0.5 * s[i] : 0.1 * (c[i] * c[j] - s[i] * s[j]);
        }
    }
    void linearization(std::span<const double> u, std::span<double> sig, std::span<double> dsig,
                       std::span<double> db) const override {
        const int d = dim();
        double s[kMaxFast], c[kMaxFast];
        if (d > kMaxFast) return CoefficientModel::linearization(u, sig, dsig, db);
        for (int i = 0; i < d; ++i) {
            s[i] = std::sin(u[i]);
            c[i] = std::cos(u[i]);
        }
        std::fill(dsig.begin(), dsig.end(), 0.0);
        std::fill(db.begin(), db.end(), 0.0);
        for (int i = 0; i < d; ++i) {
            db[i * d + i] = 0.5 * c[i];
            for (int j = 0; j < d; ++j) {
                double* row = &dsig[(i * d + j) * d];
                if (i == j) {
                    sig[i * d + j] = 1.0 + 0.5 * s[i];
                    row[i] = 0.5 * c[i];
                } else {
                    sig[i * d + j] = 0.1 * (c[i] * c[j] - s[i] * s[j]);
                    const double ds = -0.1 * (s[i] * c[j] + c[i] * s[j]);
                    row[i] += ds;
                    row[j] += ds;
                }
            }
        }
    }

private:
    static constexpr int kMaxFast = 16;
};

}  // namespace

void CoefficientModel::sigma_jacobian(std::span<const double> u, std::span<double> out) const {
    const int d = dim();
    std::vector<double> x(u.begin(), u.end()), plus(d * d), minus(d * d);
    for (int l = 0; l < d; ++l) {
        x[l] = u[l] + kJacobianStep;
        sigma(x, plus);
        x[l] = u[l] - kJacobianStep;
        sigma(x, minus);
        x[l] = u[l];
        for (int ij = 0; ij < d * d; ++ij)
            out[ij * d + l] = (plus[ij] - minus[ij]) / (2.0 * kJacobianStep);
    }
}

void CoefficientModel::drift_jacobian(std::span<const double> u, std::span<double> out) const {
    const int d = dim();
    std::vector<double> x(u.begin(), u.end()), plus(d), minus(d);
    for (int l = 0; l < d; ++l) {
        x[l] = u[l] + kJacobianStep;
        drift(x, plus);
        x[l] = u[l] - kJacobianStep;
        drift(x, minus);
        x[l] = u[l];
        for (int i = 0; i < d; ++i) out[i * d + l] = (plus[i] - minus[i]) / (2.0 * kJacobianStep);
    }
}

std::unique_ptr<CoefficientModel> make_constant(int dim, std::vector<double> sigma0,
                                                std::vector<double> beta0) {
    if (dim < 1) throw ConfigError("model dimension must be >= 1");
    auto m = std::make_unique<ConstantModel>(dim, std::move(sigma0), std::move(beta0));
    m->name = "constant";
    // smallest singular value of sigma0 via the Gram matrix would need a
    // solver; constant models declare no ellipticity unless set by the caller
    m->lipschitz_bound = 0.0;
    m->bounded_smooth = true;
    return m;
}

std::unique_ptr<CoefficientModel> make_linear_test(int dim) {
    std::vector<double> id(dim * dim, 0.0);
    for (int i = 0; i < dim; ++i) id[i * dim + i] = 1.0;
    auto m = make_constant(dim, std::move(id), std::vector<double>(dim, 0.0));
    m->name = "linear-test";
    m->ellipticity_rho = 1.0;
    return m;
}

std::unique_ptr<CoefficientModel> make_bounded_smooth(int dim) {
    if (dim < 1) throw ConfigError("model dimension must be >= 1");
    auto m = std::make_unique<BoundedSmooth>(dim);
    m->name = "bounded-smooth";
    // diagonal >= 1/2; the symmetric off-diagonal part has norm <= (d-1)/10
    m->ellipticity_rho = std::max(0.0, 0.5 - 0.1 * (dim - 1));
    // Frobenius bound: |d sin / 2| <= |du| / 2, |d cos(u_i+u_j)| / 10 <= (|du_i|+|du_j|) / 10
    m->lipschitz_bound = std::sqrt(0.25 + 0.04 * (dim - 1));
    m->bounded_smooth = true;
    return m;
}

std::unique_ptr<CoefficientModel> make_model(const std::string& name, int dim) {
    if (name == "linear-test") return make_linear_test(dim);
    if (name == "bounded-smooth") return make_bounded_smooth(dim);
    if (name == "zero") {
        auto m = make_constant(dim, std::vector<double>(dim * dim, 0.0), std::vector<double>(dim, 0.0));
        m->name = "zero";
        return m;
    }
    throw ConfigError("unknown coefficient model '" + name + "'");
}

ModelAudit audit_model(const CoefficientModel& model, std::uint64_t seed, int samples) {
    const int d = model.dim();
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> spread(-10.0, 10.0);
    std::vector<double> u(d), v(d), xi(d), su(d * d), sv(d * d);
    ModelAudit out;
    out.samples = samples;
    out.min_sq_norm = INFINITY;
    for (int s = 0; s < samples; ++s) {
        for (int i = 0; i < d; ++i) {
            u[i] = spread(gen);
            // nearby partner so the ratio probes the local slope, not just boundedness
            v[i] = u[i] + normal(gen) * std::pow(10.0, -1.0 - 4.0 * (s % 5) / 4.0);
            xi[i] = normal(gen);
        }
        double norm = 0.0;
        for (double c : xi) norm += c * c;
        norm = std::sqrt(norm);
        for (double& c : xi) c /= norm;

        model.sigma(u, su);
        model.sigma(v, sv);
        double sq = 0.0;
        for (int i = 0; i < d; ++i) {
            double row = 0.0;
            for (int j = 0; j < d; ++j) row += su[i * d + j] * xi[j];
            sq += row * row;
        }
        out.min_sq_norm = std::min(out.min_sq_norm, sq);

        double diff = 0.0, dist = 0.0;
        for (int k = 0; k < d * d; ++k) diff += (su[k] - sv[k]) * (su[k] - sv[k]);
        for (int i = 0; i < d; ++i) dist += (u[i] - v[i]) * (u[i] - v[i]);
        if (dist > 0.0) out.max_lipschitz_ratio = std::max(out.max_lipschitz_ratio, std::sqrt(diff / dist));
    }
    const double rho = model.ellipticity_rho;
    out.ellipticity_ok = rho <= 0.0 || out.min_sq_norm >= rho * rho;
    out.lipschitz_ok = out.max_lipschitz_ratio <= model.lipschitz_bound * (1.0 + 1e-9);
    return out;
}

}  // namespace heatprobe
