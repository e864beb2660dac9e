#pragma once

// Displacement and squeeze operators in the coordinate representation,
// with a dense-matrix route used as an independent check.

#include "squeezelab/profile.hpp"
#include "squeezelab/state_factory.hpp"
#include "squeezelab/wavefunction.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <string>

namespace squeezelab {

/// Parameters of the dynamical squeeze operator.
///
///   f = -1/2 ln(dq / dq0),   g = (m / hbar) (dq_dot / dq) / (1 - 2 f)
///
/// g is undefined where 1 - 2f vanishes (dq = dq0 e^{-1}); construction
/// refuses such points rather than returning an infinity.
struct SqueezeParams {
    double f = 0.0;
    double g = 0.0;
    double dq0 = 1.0;
    double dq = 1.0;
    double dq_dot = 0.0;

    static SqueezeParams from_dispersion(double dq0, double dq, double dq_dot, const PhysConstants& c = {});
    static SqueezeParams from_trajectory(const TrajectoryState& traj, double dq0, const PhysConstants& c = {});
    /// Explicit (f, g) for operator studies; dq and dq_dot are derived.
    static SqueezeParams from_fg(double f, double g, double dq0, const PhysConstants& c = {});
};

/// (D psi)(x) = exp(i s0 / hbar) exp(i p_shift x / hbar) psi(x - q_shift).
/// The translation is band-limited (Fourier phase ramp), so it is exact for
/// resolved states and any shift, not only whole cells.
WaveFunction displace(const WaveFunction& wf, double q_shift, double p_shift, double s0 = 0.0);

/// Quadratic-phase coefficient used by the closed form.
enum class SqueezeCoefficient {
    /// (1 - e^{-4f}) / (4f): the disentangled product of exp(iM) to all orders.
    Exact,
    /// (1 - 2f): first-order truncation of the above.
    FirstOrder,
};

std::string to_string(SqueezeCoefficient c);
SqueezeCoefficient parse_squeeze_coefficient(const std::string& name);

struct SqueezeResult {
    WaveFunction state;       ///< normalized
    double norm_before = 1.0; ///< L2 norm of e^f psi0(e^{2f} x) before renormalization
    double phase_coefficient = 0.0; ///< coefficient of x^2 in the applied phase
};

/// e^f exp(i c g e^{4f} x^2 / dq0^2) psi0(e^{2f} x), renormalized.
SqueezeResult squeeze_closed_form(const WaveFunction& psi0, const SqueezeParams& params,
                                  SqueezeCoefficient coefficient = SqueezeCoefficient::Exact);

/// Dense operator on the grid.
struct OperatorMatrix {
    Eigen::MatrixXcd matrix;
    std::string description;

    ComplexField apply(std::span<const cplx> v) const;
    /// Largest deviation of M^H M from the identity over interior rows/cols.
    double unitarity_defect(double interior_fraction = 0.5) const;
};

inline constexpr std::size_t kMaxDenseGrid = 2048;

/// Spectral derivative d/dx as a dense real matrix (Nyquist mode dropped).
Eigen::MatrixXd derivative_matrix(const Grid1D& grid);

/// exp(iM) with M = (f/hbar){q,p} + (g/dq0^2) q^2, by scaling and squaring.
OperatorMatrix squeeze_matrix_oracle(const SqueezeParams& params, const Grid1D& grid, const PhysConstants& c = {});

/// exp(s B) with B = 1/2 (1 + 2 x d/dx).
OperatorMatrix dilation_matrix(const Grid1D& grid, double s);

struct CommutatorReport {
    /// max over test vectors of |([{q,p}, q^2] + 4 i hbar q^2) v| / |4 hbar q^2 v| on interior rows
    double vector_residual = 0.0;
    /// same combination as a matrix, Frobenius ratio on interior rows; large
    /// because grid-scale columns are not resolved by the spectral derivative
    double entrywise_ratio = 0.0;
    std::size_t vectors = 0;
};

/// Checks [{q,p}, q^2] = -4 i hbar q^2 on Hermite-Gaussian test vectors.
CommutatorReport commutator_check(const Grid1D& grid, const PhysConstants& c = {}, double interior_fraction = 0.5);

/// Multiplies b by the single phase that makes it agree with a at the
/// maximum of |a|.
ComplexField align_global_phase(std::span<const cplx> a, std::span<const cplx> b);

struct OracleComparison {
    double l2_discrepancy = 0.0; ///< after alignment and normalization
    double closed_norm_before = 1.0;
    double oracle_norm = 1.0;
};

OracleComparison compare_with_matrix_oracle(const WaveFunction& psi0, const SqueezeParams& params,
                                            SqueezeCoefficient coefficient = SqueezeCoefficient::Exact);

/// Weighted least-squares fit of the phase S/hbar to a + b r + c r^2, r = x - centre,
/// using the density as weights over rho > 1e-6 max(rho).
struct QuadraticPhaseFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

QuadraticPhaseFit fit_quadratic_phase(const WaveFunction& wf, double centre);

struct SqueezedStateReport {
    WaveFunction state;          ///< operator-route state D(S psi0)
    WaveFunction reference;      ///< state assembled directly from the trajectory
    SqueezeParams params;
    SqueezeCoefficient coefficient = SqueezeCoefficient::Exact;
    double norm_before = 1.0;
    double overlap = 0.0;
    double modulus_max_diff = 0.0;
    QuadraticPhaseFit fit_operator;
    QuadraticPhaseFit fit_reference;
    double target_coefficient = 0.0;         ///< m dq_dot / (2 hbar dq)
    double first_order_coefficient = 0.0;   ///< (1-2f) g e^{4f} / dq0^2
    double exact_coefficient = 0.0;         ///< c(f) g e^{4f} / dq0^2
};

/// Builds D(q, m v, S0) S(f, g) psi0 and compares it with assemble_state.
/// psi0 must be the centred profile state at the reference dispersion.
SqueezedStateReport squeezed_state(const WaveFunction& psi0, const TrajectoryState& traj,
                                   const StateProfile& profile,
                                   SqueezeCoefficient coefficient = SqueezeCoefficient::Exact);

nlohmann::json to_json(const SqueezeParams& p);
nlohmann::json to_json(const SqueezedStateReport& r);

} // namespace squeezelab
