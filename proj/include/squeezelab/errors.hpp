#pragma once

#include <stdexcept>
#include <string>

namespace squeezelab {

/// Input rejected by a precondition (bad shape, leaked packet, invalid config).
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure failed: singular dispersion, non-finite state,
/// non-convergent quadrature or exponential.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace squeezelab
