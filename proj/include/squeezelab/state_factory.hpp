#pragma once

#include "squeezelab/profile.hpp"
#include "squeezelab/wavefunction.hpp"

namespace squeezelab {

/// Finite-dimensional state of a coherent-state family member.
struct TrajectoryState {
    double q_mean = 0.0;
    double v_mean = 0.0;
    double dq = 1.0;
    double dq_dot = 0.0;
    double S0 = 0.0;
    double t = 0.0;

    void validate() const;
};

/// Builds the standardized profile of a real, positive, nodeless ground
/// state. G is measured from psi'/psi on the source grid; tails below
/// rho_floor are continued from the last valid slope.
StateProfile profile_from_ground_state(const WaveFunction& psi0, double rho_floor = 1e-12);

/// |psi|^2 = rho~(xi)/dq with xi = (x - q)/dq, phase
/// [m v x + (m/2)(x - q)^2 dq_dot/dq + S0] / hbar.
WaveFunction assemble_state(const StateProfile& profile, const TrajectoryState& traj, const Grid1D& grid,
                            const PhysConstants& constants);

struct UncertaintyIdentity {
    double lhs = 0.0; ///< (dq dp)^2 measured on the assembled state
    double rhs = 0.0; ///< m^2 K + L^2, L = m dq dq_dot
    double relative_gap() const;
};

UncertaintyIdentity uncertainty_identity(const StateProfile& profile, const TrajectoryState& traj,
                                         const Grid1D& grid, const PhysConstants& constants);

} // namespace squeezelab
