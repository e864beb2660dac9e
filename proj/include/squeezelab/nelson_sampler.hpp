#pragma once

// Euler-Maruyama sampling of the Nelson diffusion behind a coherent-state
// trajectory: dq = v+(q, t) dt + sqrt(hbar/m) dW.

#include "squeezelab/coherent_dynamics.hpp"
#include "squeezelab/profile.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace squeezelab {

inline constexpr std::size_t kMinPaths = 100;
inline constexpr double kDefaultXiMax = 8.0;
inline constexpr double kMaxExcludedFraction = 0.01;

struct EnsembleConfig {
    std::size_t n_paths = 100000;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    double t_begin = 0.0;
    double t_end = 1.0;
    std::size_t output_stride = 100;
    double xi_max = kDefaultXiMax;
    /// 0 picks the hardware concurrency. Results do not depend on it.
    unsigned workers = 0;

    void validate() const;
    std::size_t steps() const;
};

/// Standard normal variate for (seed, path, step), reproducible and
/// independent of evaluation order.
double counter_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step);
/// Uniform variate in (0, 1) for (seed, path, step).
double counter_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step);

/// Positions of every path at every output time. Each output also keeps the
/// position one step earlier, for backward increments.
struct PathEnsemble {
    std::size_t n_paths = 0;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<double> positions; ///< [output * n_paths + path]
    std::vector<double> previous;  ///< same layout; equals positions at the first output
    std::vector<std::uint8_t> excluded;
    double excluded_fraction = 0.0;
    double noise_sq_sum = 0.0; ///< sum over included steps of (dq - v+ dt)^2
    std::size_t noise_count = 0;

    std::size_t outputs() const { return times.size(); }
    std::span<const double> at(std::size_t k) const { return {positions.data() + k * n_paths, n_paths}; }
    std::span<const double> before(std::size_t k) const { return {previous.data() + k * n_paths, n_paths}; }
    /// Quadratic variation per unit time, which estimates hbar/m.
    double diffusion_estimate() const;
};

using DriftFn = std::function<double(double x, double t)>;

/// Generic sampler: initial positions given, drift evaluated at the start of
/// each step, Gaussian increments of standard deviation noise_scale sqrt(dt).
/// Paths are never excluded here.
PathEnsemble sample_paths(const EnsembleConfig& cfg, std::span<const double> initial, const DriftFn& drift,
                          double noise_scale);

/// Samples the diffusion of the state (profile, record). Initial points come
/// from the profile quantile; the drift is v + u = <v> + xi dq_dot + G(xi)/dq.
/// Paths leaving |xi| <= xi_max are excluded; more than 1% excluded is an error.
PathEnsemble sample_forward(const StateProfile& profile, const TrajectoryRecord& record, const EnsembleConfig& cfg);

struct SampleMoments {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;
    double kurtosis = 3.0;
};

SampleMoments moments(const PathEnsemble& e, std::size_t output);

struct BackwardReport {
    double max_z = 0.0; ///< largest bin deviation in units of its CLT band
    std::size_t bins_used = 0;
    std::size_t bins_skipped = 0;
};

inline constexpr std::size_t kMinBinCount = 100;

/// Compares binned backward increments (q(t) - q(t - dt)) / dt against v_minus(q(t), t).
BackwardReport backward_consistency(const PathEnsemble& e, const DriftFn& v_minus, std::size_t bins = 20);
/// v_minus = v - u from the closed-form fields of (profile, record).
BackwardReport backward_consistency(const PathEnsemble& e, const StateProfile& profile,
                                    const TrajectoryRecord& record, std::size_t bins = 20);

struct OsmoticReport {
    double exact = 0.0;     ///< m sqrt(K)
    double empirical = 0.0; ///< m * std(q) * std(u(q))
    double band = 0.0;      ///< 4-sigma CLT band on the empirical value
    double bound = 0.0;     ///< hbar / 2
    double quantum = 0.0;   ///< dq dp of the assembled state, sqrt(m^2 K + L^2)
    bool chain_holds(double tol) const;
};

/// Exact route only.
OsmoticReport osmotic_uncertainty(const StateProfile& profile, const TrajectoryState& traj);
/// Exact and empirical routes at one output time.
OsmoticReport osmotic_uncertainty(const PathEnsemble& e, std::size_t output, const StateProfile& profile,
                                  const TrajectoryRecord& record);

struct ChiSquaredReport {
    double statistic = 0.0;
    std::size_t dof = 0;
    double p_value = 0.0;
};

/// Goodness of fit of the ensemble at one output against rho~(xi)/dq, using
/// equiprobable bins from the profile quantile.
ChiSquaredReport density_chi_squared(const PathEnsemble& e, std::size_t output, const StateProfile& profile,
                                     const TrajectoryRecord& record, std::size_t bins = 50);

/// CSV: t, empirical_mean, empirical_std, model_mean, model_std, excluded_fraction.
void write_ensemble_csv(const PathEnsemble& e, const TrajectoryRecord& record, std::ostream& out);

} // namespace squeezelab
