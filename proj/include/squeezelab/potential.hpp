#pragma once

#include "squeezelab/grid.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace squeezelab {

enum class PotentialKind { Harmonic, TimeHarmonic, Polynomial, Analytic, SynthesizedTable };

std::string to_string(PotentialKind kind);

/// External potential Phi(x, t) together with its gradient.
class PotentialModel {
public:
    using Fn = std::function<double(double x, double t)>;

    PotentialModel(PotentialKind kind, std::string description, Fn phi, Fn grad_phi,
                   bool time_independent);

    double phi(double x, double t) const { return phi_(x, t); }
    double grad(double x, double t) const { return grad_(x, t); }

    PotentialKind kind() const { return kind_; }
    const std::string& description() const { return description_; }
    bool time_independent() const { return time_independent_; }

    RealField sample(const Grid1D& grid, double t) const;

    /// Largest relative mismatch between grad() and a central difference of phi()
    /// over the given points. Relative to max(|grad|, 1).
    double gradient_mismatch(std::span<const double> points, double t, double step = 1e-5) const;

private:
    PotentialKind kind_;
    std::string description_;
    Fn phi_;
    Fn grad_;
    bool time_independent_;
};

namespace potentials {

/// Phi = 0.
PotentialModel free_particle();
/// Phi = m omega^2 (x - center)^2 / 2.
PotentialModel harmonic(const PhysConstants& constants, double omega, double center = 0.0);
/// Phi = m omega(t)^2 x^2 / 2 for an arbitrary frequency protocol.
PotentialModel time_harmonic(const PhysConstants& constants, std::function<double(double)> omega,
                             std::string description);
/// Sudden frequency change omega_before -> omega_after at t_switch.
PotentialModel quench(const PhysConstants& constants, double omega_before, double omega_after,
                      double t_switch = 0.0);
/// Phi = sum_k coeffs[k] x^k.
PotentialModel polynomial(std::vector<double> coeffs);
/// Poschl-Teller well -(hbar^2 alpha^2 / m) sech^2(alpha x), ground state ~ sech(alpha x).
PotentialModel poschl_teller(const PhysConstants& constants, double alpha);

} // namespace potentials

} // namespace squeezelab
