#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace heatprobe {

/// Coefficients (sigma, b) of the system
///   du_i = u_i'' dt + b_i(u) dt + sum_j sigma_ij(u) W^j(dt, dx).
///
/// Matrices are row-major: sigma[i * d + j]. Jacobians are laid out as
/// dsigma[(i * d + j) * d + l] = d sigma_ij / d u_l and db[i * d + l].
class CoefficientModel {
public:
    explicit CoefficientModel(int dim) : dim_(dim) {}
    virtual ~CoefficientModel() = default;

    int dim() const { return dim_; }

    virtual void sigma(std::span<const double> u, std::span<double> out) const = 0;
    virtual void drift(std::span<const double> u, std::span<double> out) const = 0;

    /// Central differences with step 1e-6 unless overridden.
    virtual void sigma_jacobian(std::span<const double> u, std::span<double> out) const;
    virtual void drift_jacobian(std::span<const double> u, std::span<double> out) const;

    /// sigma and b together; models override this to share work.
    virtual void coefficients(std::span<const double> u, std::span<double> sig,
                              std::span<double> b) const {
        sigma(u, sig);
        drift(u, b);
    }
    /// sigma and both Jacobians together.
    virtual void linearization(std::span<const double> u, std::span<double> sig,
                               std::span<double> dsig, std::span<double> db) const {
        sigma(u, sig);
        sigma_jacobian(u, dsig);
        drift_jacobian(u, db);
    }

    /// True when sigma does not depend on u and b vanishes (the derivative
    /// equation then has no random coefficients).
    virtual bool is_additive() const { return false; }

    std::string name;
    double lipschitz_bound = 0.0;
    /// Lower bound on ||sigma(u) xi|| for unit xi; 0 when ellipticity is not claimed.
    double ellipticity_rho = 0.0;
    /// sigma and b bounded with bounded derivatives of all orders.
    bool bounded_smooth = false;

private:
    int dim_;
};

/// sigma = sigma0 (d x d, row-major), b = beta0.
std::unique_ptr<CoefficientModel> make_constant(int dim, std::vector<double> sigma0,
                                                std::vector<double> beta0);

/// sigma = identity, b = 0.
std::unique_ptr<CoefficientModel> make_linear_test(int dim);

/// sigma_ii = 1 + sin(u_i) / 2, sigma_ij = cos(u_i + u_j) / 10 for i != j,
/// b_i = sin(u_i) / 2; analytic Jacobians.
std::unique_ptr<CoefficientModel> make_bounded_smooth(int dim);

/// Looks up "linear-test", "bounded-smooth" or "zero" (sigma = b = 0).
std::unique_ptr<CoefficientModel> make_model(const std::string& name, int dim);

struct ModelAudit {
    int samples = 0;
    double min_sq_norm = 0.0;        // min ||sigma(u) xi||^2 over sampled unit xi
    double max_lipschitz_ratio = 0.0;  // max ||sigma(u) - sigma(v)||_F / ||u - v||
    bool ellipticity_ok = true;
    bool lipschitz_ok = true;
};

/// Randomized check of the declared ellipticity and Lipschitz constants.
ModelAudit audit_model(const CoefficientModel& model, std::uint64_t seed, int samples = 1000);

}  // namespace heatprobe
