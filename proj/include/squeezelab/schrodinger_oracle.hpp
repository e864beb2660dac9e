#pragma once

// Split-step spectral solver for i hbar psi_t = -(hbar^2/2m) psi_xx + Phi psi.
// Used as ground truth for the trajectory models.

#include "squeezelab/coherent_dynamics.hpp"
#include "squeezelab/potential.hpp"
#include "squeezelab/wavefunction.hpp"

#include <iosfwd>
#include <vector>

namespace squeezelab {

inline constexpr double kDefaultPropagatorStep = 2.5e-4;
inline constexpr double kLeakageAbortTol = 1e-8;

struct PropagatorConfig {
    double dt = kDefaultPropagatorStep;
    std::size_t output_stride = 1;
    /// Abort when |psi| near either edge exceeds this.
    double leakage_tol = kLeakageAbortTol;

    void validate() const;
};

struct Frame {
    double t;
    WaveFunction wf;
};

struct Propagation {
    std::vector<Frame> frames;
    std::size_t steps = 0;
    double max_norm_drift = 0.0; ///< max |<psi|psi> - <psi0|psi0>| over all steps
};

/// Strang splitting: half potential kick at the step midpoint time, full
/// kinetic step in Fourier space, second half kick. Frames are emitted at t0,
/// every output_stride steps and at the end.
Propagation propagate(const WaveFunction& wf0, const PotentialModel& potential, const PropagatorConfig& cfg,
                      double t0, double t_end);

/// Convergence gate: |1 - |<psi_dt | psi_dt/2>|| between the final states of
/// runs at cfg.dt and cfg.dt / 2. Pass `final_state` to reuse a finished run at cfg.dt.
double halving_gap(const WaveFunction& wf0, const PotentialModel& potential, const PropagatorConfig& cfg, double t0,
                   double t_end, const WaveFunction* final_state = nullptr);

/// <H> = <T> + <Phi(., t)> for a normalized state.
double energy(const WaveFunction& wf, const PotentialModel& potential, double t);

struct FidelityRow {
    double t = 0.0;
    double overlap = 0.0;
    double density_l2 = 0.0;
    double q_mean_delta = 0.0;
    double dq_delta = 0.0;
};

struct FidelityReport {
    std::vector<FidelityRow> rows;
    double min_overlap() const;
    double max_density_l2() const;
};

/// Compares solver frames with states assembled from a trajectory record.
/// Every frame time must coincide with a record time.
FidelityReport compare_with_model(const std::vector<Frame>& frames, const StateProfile& profile,
                                  const TrajectoryRecord& record);

void write_fidelity_csv(const FidelityReport& report, std::ostream& out);
void write_frame_csv(const Frame& frame, std::ostream& out);

struct RelaxOptions {
    double dtau = 1e-3;
    std::size_t max_steps = 200000;
    double energy_tol = 1e-13; ///< stop when |dE| per step falls below this
};

/// Imaginary-time relaxation to the ground state of a static potential.
WaveFunction relax_ground_state(const WaveFunction& guess, const PotentialModel& potential,
                                const RelaxOptions& options = {});

} // namespace squeezelab
