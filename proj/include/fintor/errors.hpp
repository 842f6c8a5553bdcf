#ifndef FINTOR_ERRORS_HPP
#define FINTOR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fintor {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Gram matrix not symmetric positive definite, or condition cap exceeded.
struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error(msg) {}
};

// An eigenvalue or singular value fell into the dead zone [tau, 10*tau],
// or a rank decision would otherwise be a silent guess.
struct RankAmbiguityError : Error {
    explicit RankAmbiguityError(const std::string& msg) : Error(msg) {}
};

// Malformed input: bad shapes, non-closed flux, schema violations.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// t-grid unsuitable for germ extraction (too few points or decades).
struct GridError : Error {
    explicit GridError(const std::string& msg) : Error(msg) {}
};

// A branch slope did not resolve to an integer exponent.
struct UnresolvedBranchError : Error {
    explicit UnresolvedBranchError(const std::string& msg) : Error(msg) {}
};

} // namespace fintor

#endif
