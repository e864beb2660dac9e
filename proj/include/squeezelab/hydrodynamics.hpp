#pragma once

#include "squeezelab/potential.hpp"
#include "squeezelab/wavefunction.hpp"

#include <optional>
#include <vector>

namespace squeezelab {

inline constexpr double kDefaultRhoFloor = 1e-14;

/// Madelung / osmotic decomposition psi = sqrt(rho) exp(iS/hbar).
///
/// u = (hbar/2m) d/dx ln rho, v = (1/m) dS/dx. Both are evaluated from
/// psi'/psi so the current velocity does not depend on the phase unwrap.
/// Outside the valid region (rho <= floor) u, v and du are held at the
/// last valid value and the point is flagged.
struct HydroFields {
    Grid1D grid;
    PhysConstants constants;
    double rho_floor;
    RealField rho;
    RealField S;
    RealField u;
    RealField v;
    RealField du; ///< d u / dx
    std::vector<bool> valid;

    double valid_mass() const;
};

/// Decomposes a normalized state. S is pinned at the grid point nearest
/// <q> to `phase_pin` (0 by default). Throws NumericalError when the
/// phase advances by more than pi between adjacent valid points.
HydroFields decompose(const WaveFunction& wf, double rho_floor = kDefaultRhoFloor,
                      std::optional<double> phase_pin = std::nullopt);

struct Drifts {
    RealField forward;  ///< v + u
    RealField backward; ///< v - u
};

Drifts drifts(const HydroFields& h);

/// v_(+) - (hbar/m) d/dx ln rho with the log-derivative taken spectrally
/// from rho itself; an independent route to the backward drift.
RealField backward_drift_from_density(const HydroFields& h);

/// Residual field with norms restricted to the valid region.
struct ResidualReport {
    RealField field; ///< zero outside the valid region
    double max_abs = 0.0;
    double l2 = 0.0;
};

/// d rho/dt + d/dx (rho v).
ResidualReport continuity_residual(const HydroFields& h, std::span<const double> rho_dot);

/// dS/dt + (m/2) v^2 - (m/2) u^2 - (hbar/2) du/dx + Phi(x, t).
ResidualReport hjm_residual(const HydroFields& h, std::span<const double> S_dot,
                            const PotentialModel& potential, double t);

/// Centered time derivative of the density from frames at t - dt and t + dt.
RealField density_rate(const WaveFunction& before, const WaveFunction& after, double two_dt);

/// Centered time derivative of the phase action, hbar * arg(psi_after conj psi_before) / (2 dt).
/// The per-point phase increment must stay below pi.
RealField phase_rate(const WaveFunction& before, const WaveFunction& after, double two_dt);

/// rho-weighted moments over the valid region.
struct HydroMoments {
    double mean_u = 0.0;
    double du_spread = 0.0; ///< rho-weighted standard deviation of u
    double dv_spread = 0.0;
    double dq = 0.0;
};

HydroMoments hydro_moments(const HydroFields& h);

} // namespace squeezelab
