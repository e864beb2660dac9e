#include "squeezelab/state_factory.hpp"

#include "squeezelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace squeezelab {

void TrajectoryState::validate() const {
    if (!(dq > 0.0) || !std::isfinite(dq)) throw ValidationError("dispersion dq must be positive and finite");
    if (!std::isfinite(q_mean) || !std::isfinite(v_mean) || !std::isfinite(dq_dot) || !std::isfinite(S0) ||
        !std::isfinite(t))
        throw ValidationError("trajectory state has non-finite fields");
}

StateProfile profile_from_ground_state(const WaveFunction& psi0, double rho_floor) {
    const auto& grid = psi0.grid();
    const auto& psi = psi0.psi();
    const auto& c = psi0.constants();
    const WaveFunction wf = psi0.normalized();

    double peak = 0.0;
    for (const auto& z : psi) peak = std::max(peak, std::abs(z));
    for (const auto& z : psi) {
        if (std::abs(z.imag()) > 1e-10 * peak)
            throw ValidationError("ground state must be real (zero phase)");
        if (z.real() < -1e-10 * peak) throw ValidationError("ground state must be positive (no nodes)");
    }

    const auto obs = observables(wf);
    const double q0 = obs.q_mean;
    const double dq0 = obs.dq;
    const auto d1 = derivative(grid, wf.values(), 1);
    const double hbar_over_m = c.hbar / c.mass;

    // Contiguous region around the peak where the density is reliable.
    const auto rho = wf.density();
    const auto peak_it = std::max_element(rho.begin(), rho.end());
    std::size_t lo = static_cast<std::size_t>(peak_it - rho.begin());
    std::size_t hi = lo;
    while (lo > 0 && rho[lo - 1] > rho_floor) --lo;
    while (hi + 1 < rho.size() && rho[hi + 1] > rho_floor) ++hi;
    for (std::size_t j = lo; j <= hi; ++j)
        if (rho[j] < 1e-3 * rho_floor) throw ValidationError("ground state has a node");
    if (hi - lo < 16) throw ValidationError("ground state is under-resolved on its grid");

    std::vector<double> log_rho, g;
    log_rho.reserve(hi - lo + 1);
    g.reserve(hi - lo + 1);
    for (std::size_t j = lo; j <= hi; ++j) {
        // rho~(xi) = dq0 * rho(q0 + dq0 xi);  G = dq0 * u.
        log_rho.push_back(std::log(dq0 * rho[j]));
        g.push_back(dq0 * hbar_over_m * (d1[j] / wf.psi()[j]).real());
    }
    const double xi0 = (grid.x(lo) - q0) / dq0;
    return StateProfile::from_uniform_samples(xi0, grid.dx() / dq0, std::move(log_rho), std::move(g), c,
                                              "ground-state");
}

WaveFunction assemble_state(const StateProfile& profile, const TrajectoryState& traj, const Grid1D& grid,
                            const PhysConstants& constants) {
    traj.validate();
    constants.validate();
    const double m = constants.mass;
    const double hbar = constants.hbar;
    const double chirp = 0.5 * m * traj.dq_dot / traj.dq;
    ComplexField psi(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.x(j);
        const double d = x - traj.q_mean;
        const double xi = d / traj.dq;
        const double amp = std::exp(0.5 * profile.log_density(xi)) / std::sqrt(traj.dq);
        const double phase = (m * traj.v_mean * x + chirp * d * d + traj.S0) / hbar;
        psi[j] = std::polar(amp, phase);
    }
    WaveFunction wf(grid, std::move(psi), constants);
    const double n2 = wf.norm_squared();
    if (std::abs(n2 - 1.0) > 1e-6) {
        std::ostringstream msg;
        msg << "assembled state is under-resolved: norm^2 = " << n2 << " at dq = " << traj.dq;
        throw ValidationError(msg.str());
    }
    return wf.normalized();
}

double UncertaintyIdentity::relative_gap() const { return std::abs(lhs - rhs) / std::abs(rhs); }

UncertaintyIdentity uncertainty_identity(const StateProfile& profile, const TrajectoryState& traj,
                                         const Grid1D& grid, const PhysConstants& constants) {
    const auto obs = observables(assemble_state(profile, traj, grid, constants));
    const double m = constants.mass;
    const double L = m * traj.dq * traj.dq_dot;
    UncertaintyIdentity id;
    const double prod = obs.dq * obs.dp;
    id.lhs = prod * prod;
    id.rhs = m * m * profile.K() + L * L;
    return id;
}

} // namespace squeezelab
