#pragma once

// Analytic states shared by the unit tests. Everything here is computed
// from closed forms, independently of the library's construction paths.

#include "squeezelab/wavefunction.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fixtures {

using squeezelab::cplx;
using squeezelab::ComplexField;
using squeezelab::Grid1D;
using squeezelab::PhysConstants;
using squeezelab::WaveFunction;

/// Gaussian with position variance sigma^2, centre x0, momentum p0, chirp c
/// (phase c (x - x0)^2 / hbar), evaluated analytically.
inline ComplexField gaussian_samples(const Grid1D& grid, double sigma, double x0 = 0.0, double p0 = 0.0,
                                     double chirp = 0.0, double hbar = 1.0) {
    ComplexField psi(grid.size());
    const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.x(j);
        const double d = x - x0;
        psi[j] = norm * std::exp(-d * d / (4.0 * sigma * sigma)) * std::polar(1.0, (p0 * x + chirp * d * d) / hbar);
    }
    return psi;
}

inline WaveFunction gaussian(const Grid1D& grid, double sigma, double x0 = 0.0, double p0 = 0.0, double chirp = 0.0,
                             PhysConstants c = {}) {
    return WaveFunction(grid, gaussian_samples(grid, sigma, x0, p0, chirp, c.hbar), c);
}

/// Harmonic ground state dispersion sqrt(hbar / 2 m omega).
inline double ground_dispersion(double omega, PhysConstants c = {}) {
    return std::sqrt(c.hbar / (2.0 * c.mass * omega));
}

/// Free Gaussian packet at time t, initial dispersion s0 and no chirp (exact solution).
inline ComplexField free_gaussian_samples(const Grid1D& grid, double s0, double t, PhysConstants c = {}) {
    const cplx a = cplx(1.0, c.hbar * t / (2.0 * c.mass * s0 * s0));
    ComplexField psi(grid.size());
    const cplx pref = std::pow(2.0 * std::numbers::pi * s0 * s0, -0.25) / std::sqrt(a);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.x(j);
        psi[j] = pref * std::exp(-x * x / (4.0 * s0 * s0 * a));
    }
    return psi;
}

/// Random smooth superposition of Gaussians with random phases; used as a
/// generator for property tests.
inline WaveFunction random_state(std::mt19937_64& rng, const Grid1D& grid, PhysConstants c = {}) {
    std::uniform_real_distribution<double> centre(-3.0, 3.0), width(0.5, 1.5), mom(-2.0, 2.0), ph(0.0, 6.283),
        amp(0.2, 1.0), chirp(-0.5, 0.5);
    std::uniform_int_distribution<int> count(1, 3);
    ComplexField psi(grid.size(), 0.0);
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
        const auto g = gaussian_samples(grid, width(rng), centre(rng), mom(rng), chirp(rng), c.hbar);
        const cplx w = std::polar(amp(rng), ph(rng));
        for (std::size_t j = 0; j < psi.size(); ++j) psi[j] += w * g[j];
    }
    return WaveFunction::make_normalized(grid, std::move(psi), c);
}

} // namespace fixtures
