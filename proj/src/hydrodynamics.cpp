#include "squeezelab/hydrodynamics.hpp"

#include "squeezelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace squeezelab {

namespace {

// Replace flagged entries by the nearest valid value to their left (or the
// first valid value for a leading run).
void hold_last_valid(RealField& f, const std::vector<bool>& valid) {
    const std::size_t n = f.size();
    std::size_t first = n;
    for (std::size_t j = 0; j < n; ++j)
        if (valid[j]) {
            first = j;
            break;
        }
    if (first == n) return;
    for (std::size_t j = 0; j < first; ++j) f[j] = f[first];
    double last = f[first];
    for (std::size_t j = first; j < n; ++j) {
        if (valid[j])
            last = f[j];
        else
            f[j] = last;
    }
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

ResidualReport summarize(RealField field, const HydroFields& h) {
    ResidualReport r;
    double sum2 = 0.0;
    for (std::size_t j = 0; j < field.size(); ++j) {
        if (!h.valid[j]) {
            field[j] = 0.0;
            continue;
        }
        r.max_abs = std::max(r.max_abs, std::abs(field[j]));
        sum2 += field[j] * field[j];
    }
    r.l2 = std::sqrt(sum2 * h.grid.dx());
    r.field = std::move(field);
    return r;
}

} // namespace

double HydroFields::valid_mass() const {
    double m = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j)
        if (valid[j]) m += rho[j];
    return m * grid.dx();
}

HydroFields decompose(const WaveFunction& wf, double rho_floor, std::optional<double> phase_pin) {
    if (!(rho_floor > 0.0)) throw ValidationError("rho_floor must be positive");
    const auto& grid = wf.grid();
    const auto& psi = wf.psi();
    const double hbar = wf.constants().hbar;
    const double m = wf.constants().mass;
    const std::size_t n = grid.size();

    const double norm = wf.norm_squared();
    if (std::abs(norm - 1.0) > kNormRejectTol)
        throw ValidationError("decompose requires a normalized state");

    const auto d1 = derivative(grid, wf.values(), 1);
    const auto d2 = derivative(grid, wf.values(), 2);

    HydroFields h{grid, wf.constants(), rho_floor, wf.density(), RealField(n, 0.0), RealField(n, 0.0),
                  RealField(n, 0.0), RealField(n, 0.0), std::vector<bool>(n, false)};

    std::size_t n_valid = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (!(h.rho[j] > rho_floor)) continue;
        h.valid[j] = true;
        ++n_valid;
        const cplx r1 = d1[j] / psi[j];
        const cplx r2 = d2[j] / psi[j];
        h.u[j] = hbar / m * r1.real();
        h.v[j] = hbar / m * r1.imag();
        h.du[j] = hbar / m * (r2 - r1 * r1).real();
    }
    if (n_valid == 0) throw ValidationError("no grid point has density above rho_floor");

    // Phase: unwrap outward from the pin point, cross-checked against the
    // local phase gradient m v / hbar.
    double q_mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) q_mean += grid.x(j) * h.rho[j];
    q_mean *= grid.dx();
    std::size_t pin = grid.nearest_index(q_mean);
    if (!h.valid[pin]) {
        pin = static_cast<std::size_t>(std::distance(h.rho.begin(), std::max_element(h.rho.begin(), h.rho.end())));
    }

    const double dx = grid.dx();
    auto step = [&](std::size_t from, std::size_t to) {
        const double raw = wrap_angle(std::arg(psi[to]) - std::arg(psi[from]));
        const double expected = 0.5 * (h.v[from] + h.v[to]) * (static_cast<double>(to) - static_cast<double>(from)) *
                                dx * m / hbar;
        const double jump = expected - raw;
        if (std::abs(expected) > std::numbers::pi || std::abs(wrap_angle(jump)) > 0.5 * std::numbers::pi) {
            std::ostringstream msg;
            msg << "phase unwrap failed between x=" << grid.x(from) << " and x=" << grid.x(to)
                << ": phase advance " << expected << " rad per cell exceeds the grid resolution";
            throw NumericalError(msg.str());
        }
        h.S[to] = h.S[from] + hbar * raw;
    };

    h.S[pin] = phase_pin.value_or(0.0);
    for (std::size_t j = pin + 1; j < n && h.valid[j]; ++j) step(j - 1, j);
    for (std::size_t j = pin; j-- > 0 && h.valid[j];) step(j + 1, j);

    // Points disconnected from the pin's valid run keep S = 0 and are
    // treated as flagged for S; u and v stay pointwise-defined there.
    hold_last_valid(h.u, h.valid);
    hold_last_valid(h.v, h.valid);
    hold_last_valid(h.du, h.valid);
    hold_last_valid(h.S, h.valid);
    return h;
}

Drifts drifts(const HydroFields& h) {
    Drifts d{RealField(h.u.size()), RealField(h.u.size())};
    for (std::size_t j = 0; j < h.u.size(); ++j) {
        d.forward[j] = h.v[j] + h.u[j];
        d.backward[j] = h.v[j] - h.u[j];
    }
    return d;
}

RealField backward_drift_from_density(const HydroFields& h) {
    const auto drho = derivative(h.grid, std::span<const double>(h.rho), 1);
    const double c = h.constants.hbar / h.constants.mass;
    RealField out(h.rho.size(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double forward = h.v[j] + h.u[j];
        out[j] = h.valid[j] ? forward - c * drho[j] / h.rho[j] : h.v[j] - h.u[j];
    }
    return out;
}

ResidualReport continuity_residual(const HydroFields& h, std::span<const double> rho_dot) {
    if (rho_dot.size() != h.rho.size()) throw ValidationError("rho_dot length does not match grid");
    RealField current(h.rho.size());
    for (std::size_t j = 0; j < current.size(); ++j) current[j] = h.rho[j] * h.v[j];
    const auto dj = derivative(h.grid, std::span<const double>(current), 1);
    RealField res(current.size());
    for (std::size_t j = 0; j < res.size(); ++j) res[j] = rho_dot[j] + dj[j];
    return summarize(std::move(res), h);
}

ResidualReport hjm_residual(const HydroFields& h, std::span<const double> S_dot, const PotentialModel& potential,
                            double t) {
    if (S_dot.size() != h.rho.size()) throw ValidationError("S_dot length does not match grid");
    const double m = h.constants.mass;
    const double hbar = h.constants.hbar;
    RealField res(h.rho.size());
    for (std::size_t j = 0; j < res.size(); ++j) {
        res[j] = S_dot[j] + 0.5 * m * h.v[j] * h.v[j] - 0.5 * m * h.u[j] * h.u[j] - 0.5 * hbar * h.du[j] +
                 potential.phi(h.grid.x(j), t);
    }
    return summarize(std::move(res), h);
}

RealField density_rate(const WaveFunction& before, const WaveFunction& after, double two_dt) {
    if (!(before.grid() == after.grid())) throw ValidationError("frames must share a grid");
    RealField out(before.psi().size());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = (std::norm(after.psi()[j]) - std::norm(before.psi()[j])) / two_dt;
    return out;
}

RealField phase_rate(const WaveFunction& before, const WaveFunction& after, double two_dt) {
    if (!(before.grid() == after.grid())) throw ValidationError("frames must share a grid");
    const double hbar = before.constants().hbar;
    RealField out(before.psi().size());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = hbar * std::arg(after.psi()[j] * std::conj(before.psi()[j])) / two_dt;
    return out;
}

HydroMoments hydro_moments(const HydroFields& h) {
    double mass = 0.0, mu = 0.0, mv = 0.0, mq = 0.0;
    for (std::size_t j = 0; j < h.rho.size(); ++j) {
        mass += h.rho[j];
        mu += h.rho[j] * h.u[j];
        mv += h.rho[j] * h.v[j];
        mq += h.rho[j] * h.grid.x(j);
    }
    mu /= mass;
    mv /= mass;
    mq /= mass;
    double vu = 0.0, vv = 0.0, vq = 0.0;
    for (std::size_t j = 0; j < h.rho.size(); ++j) {
        vu += h.rho[j] * (h.u[j] - mu) * (h.u[j] - mu);
        vv += h.rho[j] * (h.v[j] - mv) * (h.v[j] - mv);
        const double d = h.grid.x(j) - mq;
        vq += h.rho[j] * d * d;
    }
    return HydroMoments{mu, std::sqrt(vu / mass), std::sqrt(vv / mass), std::sqrt(vq / mass)};
}

} // namespace squeezelab
