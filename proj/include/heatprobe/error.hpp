#pragma once

#include <stdexcept>
#include <string>

namespace heatprobe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A series did not reach its truncation tolerance within the term budget.
class TruncationError : public Error {
public:
    TruncationError(const std::string& what, int terms, double tail)
        : Error(what), terms_used(terms), tail_bound(tail) {}
    int terms_used;
    double tail_bound;
};

/// Adaptive quadrature or an iterative solver failed to converge.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual(residual) {}
    double residual;
};

/// Inconsistent or unstable configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite or runaway value in a simulated path.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, long step, long site, long path)
        : Error(what), step(step), site(site), path(path) {}
    long step;
    long site;
    long path;
};

/// Caller violated an input contract (missing data, wrong sizes).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Least-squares scaling fit could not be formed.
class FitError : public Error {
public:
    using Error::Error;
};

}  // namespace heatprobe
