#pragma once

#include "squeezelab/potential.hpp"
#include "squeezelab/profile.hpp"
#include "squeezelab/state_factory.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace squeezelab {

/// Evolution law for the dispersion.
///  - Projected: m dq dq'' = C_G / dq^2 - <(x - <q>) dPhi/dx>  (reduces to Ermakov).
///  - PaperEq22: (m/2) dq dq'' - (m/2) <v>^2 + (m/2) K / dq^2 = -<Phi>, taken literally.
enum class DispersionLaw { Projected, PaperEq22 };

std::string to_string(DispersionLaw law);
DispersionLaw parse_dispersion_law(const std::string& name);

struct PotentialExpectations {
    double phi_mean = 0.0;
    double grad_phi_mean = 0.0;
    double torque = 0.0; ///< <(x - <q>) dPhi/dx>
};

inline constexpr double kExpectationStep = 0.05;
inline constexpr double kExpectationConvergenceTol = 1e-6;

/// Fixed quadrature nodes in xi with weights rho~(xi) h, reused across steps.
class ProfileQuadrature {
public:
    ProfileQuadrature(const StateProfile& profile, double step = kExpectationStep);
    PotentialExpectations expectations(const TrajectoryState& traj, const PotentialModel& potential, double t) const;
    std::size_t size() const { return xi_.size(); }

private:
    std::vector<double> xi_;
    std::vector<double> weight_;
};

/// <Phi>, <dPhi/dx> and the dispersion torque under rho = rho~(xi)/dq.
/// Throws NumericalError when halving the quadrature step moves any value by
/// more than kExpectationConvergenceTol (relative to max(1, |value|)).
PotentialExpectations potential_expectations(const StateProfile& profile, const TrajectoryState& traj,
                                             const PotentialModel& potential, double t);

struct TrajectoryDerivative {
    double q_mean = 0.0;
    double v_mean = 0.0;
    double dq = 0.0;
    double dq_dot = 0.0;
    double S0 = 0.0;
};

inline constexpr double kMinDispersion = 1e-6;

TrajectoryDerivative rhs(const TrajectoryState& traj, const StateProfile& profile, const PotentialModel& potential,
                         DispersionLaw law, double t);
TrajectoryDerivative rhs(const TrajectoryState& traj, const StateProfile& profile, const ProfileQuadrature& quad,
                         const PotentialModel& potential, DispersionLaw law, double t);

/// Feedback condition residual: [dPhi(<q>) - <dPhi>] - [(m/dq^3) G(0) G'(0) + (hbar/2dq^3) G''(0)].
double feedback_diagnostic(const StateProfile& profile, const TrajectoryState& traj, const PotentialModel& potential,
                           double t);

struct TrajectorySample {
    TrajectoryState state;
    TrajectoryDerivative derivative;
    PotentialExpectations expectations;
    double energy = 0.0;              ///< (m/2)(v^2 + dq_dot^2 + K/dq^2) + <Phi>
    double uncertainty_product = 0.0; ///< dq dp = sqrt(m^2 K + L^2)
    double f = 0.0;                   ///< -ln(dq/dq_ref)/2
    double g = 0.0;                   ///< (m/hbar)(1 - 2f)^-1 dq_dot/dq, NaN at f = 1/2
    double feedback_residual = 0.0;
};

/// Immutable output of integrate().
class TrajectoryRecord {
public:
    TrajectoryRecord(std::vector<TrajectorySample> samples, double dt, double reference_dq, DispersionLaw law,
                     PhysConstants constants);

    const std::vector<TrajectorySample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    double dt() const { return dt_; }
    double t_begin() const { return samples_.front().state.t; }
    double t_end() const { return samples_.back().state.t; }
    double reference_dq() const { return reference_dq_; }
    DispersionLaw law() const { return law_; }
    const PhysConstants& constants() const { return constants_; }

    /// Cubic Hermite interpolation of the state between samples. Throws
    /// ValidationError outside [t_begin, t_end].
    TrajectoryState at(double t) const;
    /// Derivative interpolated linearly between samples.
    TrajectoryDerivative derivative_at(double t) const;
    /// Index of the sample at time t within tol, if any.
    std::optional<std::size_t> index_of(double t, double tol = 1e-9) const;

    /// Largest |E(t) - E(0)| / max(1, |E(0)|).
    double energy_drift() const;

    /// Set when integration stopped early (IntegrateOptions::halt_on_failure).
    const std::string& halt_reason() const { return halt_reason_; }
    void set_halt_reason(std::string reason) { halt_reason_ = std::move(reason); }

private:
    std::vector<TrajectorySample> samples_;
    double dt_;
    double reference_dq_;
    DispersionLaw law_;
    PhysConstants constants_;
    std::string halt_reason_;
};

struct IntegrateOptions {
    double dt = 1e-3;
    /// Ground-state dispersion used for f and g; defaults to the initial dq.
    std::optional<double> reference_dq;
    /// Resolution-doubling check of the expectation quadrature at both ends.
    bool check_quadrature = true;
    /// Stop at the last good step instead of throwing when the dispersion
    /// collapses or a field turns non-finite; the reason is kept on the record.
    bool halt_on_failure = false;
};

/// Fixed-step classical RK4 over [initial.t, t_end].
TrajectoryRecord integrate(const TrajectoryState& initial, const StateProfile& profile, const PotentialModel& potential,
                           DispersionLaw law, double t_end, const IntegrateOptions& options = {});

struct SynthesisOptions {
    /// Use every n-th record sample as a time node.
    std::size_t time_stride = 1;
    /// Gauge reference: Phi(<q>(t), t) is matched to this potential; 0 when absent.
    const PotentialModel* gauge_reference = nullptr;
};

/// Inverts the HJM equation on the closed-form fields of the coherent
/// family along a trajectory. The result is a table over the grid and the
/// record times, cubic in t and x.
PotentialModel synthesize_potential(const StateProfile& profile, const TrajectoryRecord& record, const Grid1D& grid,
                                    const SynthesisOptions& options = {});

/// Closed-form synthesized potential and gradient at one point, before gauge fixing.
std::pair<double, double> synthesized_value(const StateProfile& profile, const TrajectoryState& traj,
                                            const TrajectoryDerivative& deriv, const PhysConstants& constants,
                                            double x);

/// Trajectory CSV (schema v1): t, q_mean, v_mean, dq, dq_dot, S0, phi_mean,
/// uncertainty_product, f, g, feedback_residual.
void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& out, std::size_t stride = 1);

} // namespace squeezelab
