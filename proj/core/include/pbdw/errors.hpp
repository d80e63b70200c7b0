#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pbdw {

/// Bad call arguments: dimension mismatches, invalid sizes, empty inputs.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematically valid region (parameter box, bound validity).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Factorization or solve failure, loss of positive definiteness, stagnation.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Recovery problem is ill-posed: smallest singular value of the cross
/// Gramian fell below the configured threshold.
struct IllPosedError : NumericalError {
    IllPosedError(const std::string& msg, double sigma)
        : NumericalError(msg), sigma_min(sigma) {}
    double sigma_min;
};

/// Linearly dependent inputs where independence is required; carries the
/// indices of the columns that were dropped.
struct RankError : ArgumentError {
    RankError(const std::string& msg, std::vector<int> idx)
        : ArgumentError(msg), dropped(std::move(idx)) {}
    std::vector<int> dropped;
};

/// Malformed or inconsistent run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Persisted artifact missing, corrupt, or inconsistent with its manifest.
struct ArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pbdw
