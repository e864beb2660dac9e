#include "squeezelab/coherent_dynamics.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

namespace squeezelab {

std::string to_string(DispersionLaw law) {
    return law == DispersionLaw::Projected ? "projected" : "paper-eq22";
}

DispersionLaw parse_dispersion_law(const std::string& name) {
    if (name == "projected") return DispersionLaw::Projected;
    if (name == "paper-eq22") return DispersionLaw::PaperEq22;
    throw ValidationError("unknown dispersion law '" + name + "' (expected projected or paper-eq22)");
}

// --- expectations -----------------------------------------------------------

ProfileQuadrature::ProfileQuadrature(const StateProfile& profile, double step) {
    const double w = profile.support_halfwidth();
    const auto n = static_cast<long>(std::ceil(2.0 * w / step));
    const double h = 2.0 * w / static_cast<double>(n);
    for (long k = 0; k <= n; ++k) {
        const double xi = -w + h * static_cast<double>(k);
        const double r = profile.density(xi);
        if (r < 1e-32) continue;
        xi_.push_back(xi);
        weight_.push_back(r * h);
    }
}

PotentialExpectations ProfileQuadrature::expectations(const TrajectoryState& traj, const PotentialModel& potential,
                                                      double t) const {
    PotentialExpectations e;
    for (std::size_t k = 0; k < xi_.size(); ++k) {
        const double d = traj.dq * xi_[k];
        const double x = traj.q_mean + d;
        const double g = potential.grad(x, t);
        e.phi_mean += weight_[k] * potential.phi(x, t);
        e.grad_phi_mean += weight_[k] * g;
        e.torque += weight_[k] * d * g;
    }
    return e;
}

PotentialExpectations potential_expectations(const StateProfile& profile, const TrajectoryState& traj,
                                             const PotentialModel& potential, double t) {
    traj.validate();
    const auto coarse = ProfileQuadrature(profile, kExpectationStep).expectations(traj, potential, t);
    const auto fine = ProfileQuadrature(profile, 0.5 * kExpectationStep).expectations(traj, potential, t);
    auto check = [](double a, double b, const char* what) {
        if (std::abs(a - b) > kExpectationConvergenceTol * std::max(1.0, std::abs(b))) {
            std::ostringstream msg;
            msg << "expectation quadrature of " << what << " did not converge: " << a << " vs " << b;
            throw NumericalError(msg.str());
        }
    };
    check(coarse.phi_mean, fine.phi_mean, "<Phi>");
    check(coarse.grad_phi_mean, fine.grad_phi_mean, "<dPhi/dx>");
    check(coarse.torque, fine.torque, "the dispersion torque");
    return fine;
}

// --- right-hand side --------------------------------------------------------

namespace {

TrajectoryDerivative rhs_from(const TrajectoryState& s, const StateProfile& profile, const PotentialExpectations& e,
                              const PotentialModel& potential, DispersionLaw law, double t) {
    if (!(s.dq >= kMinDispersion)) {
        std::ostringstream msg;
        msg << "dispersion collapsed to " << s.dq << " at t=" << t;
        throw NumericalError(msg.str());
    }
    const auto& c = profile.constants();
    const double m = c.mass;
    const double dq2 = s.dq * s.dq;
    TrajectoryDerivative d;
    d.q_mean = s.v_mean;
    d.v_mean = -e.grad_phi_mean / m;
    d.dq = s.dq_dot;
    if (law == DispersionLaw::Projected) {
        d.dq_dot = (profile.C_G() / dq2 - e.torque) / (m * s.dq);
    } else {
        d.dq_dot = 2.0 / (m * s.dq) * (-e.phi_mean + 0.5 * m * s.v_mean * s.v_mean - 0.5 * m * profile.K() / dq2);
    }
    const double g0 = profile.G0();
    d.S0 = -m * d.v_mean * s.q_mean - 0.5 * m * s.v_mean * s.v_mean + 0.5 * m * g0 * g0 / dq2 +
           0.5 * c.hbar * profile.G0p() / dq2 - potential.phi(s.q_mean, t);
    return d;
}

TrajectoryState advance(const TrajectoryState& s, const TrajectoryDerivative& d, double h) {
    TrajectoryState out = s;
    out.q_mean += h * d.q_mean;
    out.v_mean += h * d.v_mean;
    out.dq += h * d.dq;
    out.dq_dot += h * d.dq_dot;
    out.S0 += h * d.S0;
    out.t += h;
    return out;
}

bool finite(const TrajectoryState& s) {
    return std::isfinite(s.q_mean) && std::isfinite(s.v_mean) && std::isfinite(s.dq) && std::isfinite(s.dq_dot) &&
           std::isfinite(s.S0);
}

} // namespace

TrajectoryDerivative rhs(const TrajectoryState& traj, const StateProfile& profile, const ProfileQuadrature& quad,
                         const PotentialModel& potential, DispersionLaw law, double t) {
    if (!(traj.dq >= kMinDispersion)) return rhs_from(traj, profile, {}, potential, law, t);
    return rhs_from(traj, profile, quad.expectations(traj, potential, t), potential, law, t);
}

TrajectoryDerivative rhs(const TrajectoryState& traj, const StateProfile& profile, const PotentialModel& potential,
                         DispersionLaw law, double t) {
    if (!(traj.dq >= kMinDispersion)) return rhs_from(traj, profile, {}, potential, law, t);
    return rhs_from(traj, profile, potential_expectations(profile, traj, potential, t), potential, law, t);
}

double feedback_diagnostic(const StateProfile& profile, const TrajectoryState& traj, const PotentialModel& potential,
                           double t) {
    const auto e = potential_expectations(profile, traj, potential, t);
    const auto& c = profile.constants();
    const double dq3 = traj.dq * traj.dq * traj.dq;
    const double lhs = potential.grad(traj.q_mean, t) - e.grad_phi_mean;
    const double rhs_u = c.mass / dq3 * profile.G0() * profile.G0p() + 0.5 * c.hbar / dq3 * profile.G0pp();
    return lhs - rhs_u;
}

// --- record -----------------------------------------------------------------

TrajectoryRecord::TrajectoryRecord(std::vector<TrajectorySample> samples, double dt, double reference_dq,
                                   DispersionLaw law, PhysConstants constants)
    : samples_(std::move(samples)), dt_(dt), reference_dq_(reference_dq), law_(law), constants_(constants) {
    if (samples_.empty()) throw ValidationError("trajectory record is empty");
}

std::optional<std::size_t> TrajectoryRecord::index_of(double t, double tol) const {
    const double s = (t - t_begin()) / dt_;
    const double r = std::round(s);
    if (r < 0.0 || r > static_cast<double>(samples_.size() - 1)) return std::nullopt;
    const auto k = static_cast<std::size_t>(r);
    if (std::abs(samples_[k].state.t - t) > tol) return std::nullopt;
    return k;
}

namespace {

std::size_t bracket(const TrajectoryRecord& rec, double t) {
    const double span_tol = 1e-9 * std::max(1.0, std::abs(rec.t_end()));
    if (t < rec.t_begin() - span_tol || t > rec.t_end() + span_tol) {
        std::ostringstream msg;
        msg << "time " << t << " is outside the recorded span [" << rec.t_begin() << ", " << rec.t_end() << "]";
        throw ValidationError(msg.str());
    }
    if (rec.size() == 1) return 0;
    const double s = (t - rec.t_begin()) / rec.dt();
    const auto k = static_cast<std::size_t>(std::clamp(std::floor(s), 0.0, static_cast<double>(rec.size() - 2)));
    return k;
}

double hermite(double y0, double d0, double y1, double d1, double h, double s) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1;
}

} // namespace

TrajectoryState TrajectoryRecord::at(double t) const {
    const std::size_t k = bracket(*this, t);
    if (samples_.size() == 1) return samples_.front().state;
    const auto& a = samples_[k];
    const auto& b = samples_[k + 1];
    const double h = b.state.t - a.state.t;
    const double s = std::clamp((t - a.state.t) / h, 0.0, 1.0);
    if (s == 0.0) return a.state;
    if (s == 1.0) return b.state;
    TrajectoryState out;
    out.t = t;
    out.q_mean = hermite(a.state.q_mean, a.derivative.q_mean, b.state.q_mean, b.derivative.q_mean, h, s);
    out.v_mean = hermite(a.state.v_mean, a.derivative.v_mean, b.state.v_mean, b.derivative.v_mean, h, s);
    out.dq = hermite(a.state.dq, a.derivative.dq, b.state.dq, b.derivative.dq, h, s);
    out.dq_dot = hermite(a.state.dq_dot, a.derivative.dq_dot, b.state.dq_dot, b.derivative.dq_dot, h, s);
    out.S0 = hermite(a.state.S0, a.derivative.S0, b.state.S0, b.derivative.S0, h, s);
    return out;
}

TrajectoryDerivative TrajectoryRecord::derivative_at(double t) const {
    const std::size_t k = bracket(*this, t);
    if (samples_.size() == 1) return samples_.front().derivative;
    const auto& a = samples_[k].derivative;
    const auto& b = samples_[k + 1].derivative;
    const double s = std::clamp((t - samples_[k].state.t) / dt_, 0.0, 1.0);
    auto lerp = [s](double x, double y) { return x + s * (y - x); };
    return {lerp(a.q_mean, b.q_mean), lerp(a.v_mean, b.v_mean), lerp(a.dq, b.dq), lerp(a.dq_dot, b.dq_dot),
            lerp(a.S0, b.S0)};
}

double TrajectoryRecord::energy_drift() const {
    const double e0 = samples_.front().energy;
    double worst = 0.0;
    for (const auto& s : samples_) worst = std::max(worst, std::abs(s.energy - e0));
    return worst / std::max(1.0, std::abs(e0));
}

// --- integration ------------------------------------------------------------

TrajectoryRecord integrate(const TrajectoryState& initial, const StateProfile& profile, const PotentialModel& potential,
                           DispersionLaw law, double t_end, const IntegrateOptions& options) {
    initial.validate();
    const double dt = options.dt;
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("integration step must be positive");
    if (!std::isfinite(t_end) || t_end < initial.t) throw ValidationError("integration span must be finite and forward");
    const double dq_ref = options.reference_dq.value_or(initial.dq);
    if (!(dq_ref > 0.0)) throw ValidationError("reference dispersion must be positive");

    const auto& c = profile.constants();
    const double m = c.mass;
    const ProfileQuadrature quad(profile);
    const auto n_steps = static_cast<std::size_t>(std::llround((t_end - initial.t) / dt));

    auto sample_of = [&](const TrajectoryState& s) {
        TrajectorySample out;
        out.state = s;
        out.expectations = quad.expectations(s, potential, s.t);
        out.derivative = rhs_from(s, profile, out.expectations, potential, law, s.t);
        out.energy = 0.5 * m * (s.v_mean * s.v_mean + s.dq_dot * s.dq_dot + profile.K() / (s.dq * s.dq)) +
                     out.expectations.phi_mean;
        const double L = m * s.dq * s.dq_dot;
        out.uncertainty_product = std::sqrt(m * m * profile.K() + L * L);
        out.f = -0.5 * std::log(s.dq / dq_ref);
        const double denom = 1.0 - 2.0 * out.f;
        out.g = std::abs(denom) < 1e-12 ? std::numeric_limits<double>::quiet_NaN()
                                        : m / c.hbar / denom * s.dq_dot / s.dq;
        const double dq3 = s.dq * s.dq * s.dq;
        out.feedback_residual = potential.grad(s.q_mean, s.t) - out.expectations.grad_phi_mean -
                                (m / dq3 * profile.G0() * profile.G0p() + 0.5 * c.hbar / dq3 * profile.G0pp());
        return out;
    };

    if (options.check_quadrature) potential_expectations(profile, initial, potential, initial.t);

    std::vector<TrajectorySample> samples;
    samples.reserve(n_steps + 1);
    samples.push_back(sample_of(initial));
    // one RK4 step from `s` at step index k; throws on non-finite or collapsed states
    auto step = [&](const TrajectoryState& s, std::size_t k) {
        const double t = initial.t + dt * static_cast<double>(k);
        const auto k1 = samples.back().derivative;
        const auto k2 = rhs(advance(s, k1, 0.5 * dt), profile, quad, potential, law, t + 0.5 * dt);
        const auto k3 = rhs(advance(s, k2, 0.5 * dt), profile, quad, potential, law, t + 0.5 * dt);
        const auto k4 = rhs(advance(s, k3, dt), profile, quad, potential, law, t + dt);
        TrajectoryDerivative incr;
        incr.q_mean = (k1.q_mean + 2 * k2.q_mean + 2 * k3.q_mean + k4.q_mean) / 6.0;
        incr.v_mean = (k1.v_mean + 2 * k2.v_mean + 2 * k3.v_mean + k4.v_mean) / 6.0;
        incr.dq = (k1.dq + 2 * k2.dq + 2 * k3.dq + k4.dq) / 6.0;
        incr.dq_dot = (k1.dq_dot + 2 * k2.dq_dot + 2 * k3.dq_dot + k4.dq_dot) / 6.0;
        incr.S0 = (k1.S0 + 2 * k2.S0 + 2 * k3.S0 + k4.S0) / 6.0;
        auto next = advance(s, incr, dt);
        next.t = initial.t + dt * static_cast<double>(k + 1);
        if (!finite(next)) {
            std::ostringstream msg;
            msg << "trajectory became non-finite at t=" << next.t;
            throw NumericalError(msg.str());
        }
        if (!(next.dq >= kMinDispersion)) {
            std::ostringstream msg;
            msg << "dispersion collapsed to " << next.dq << " at t=" << next.t;
            throw NumericalError(msg.str());
        }
        return next;
    };

    TrajectoryState s = initial;
    std::string halt;
    for (std::size_t k = 0; k < n_steps; ++k) {
        try {
            const auto next = step(s, k);
            samples.push_back(sample_of(next));
            s = next;
        } catch (const NumericalError& e) {
            if (!options.halt_on_failure) throw;
            halt = e.what();
            break;
        }
    }
    if (options.check_quadrature && halt.empty()) potential_expectations(profile, s, potential, s.t);
    TrajectoryRecord rec(std::move(samples), dt, dq_ref, law, c);
    if (!halt.empty()) rec.set_halt_reason(std::move(halt));
    return rec;
}

// --- potential synthesis ----------------------------------------------------

std::pair<double, double> synthesized_value(const StateProfile& profile, const TrajectoryState& s,
                                            const TrajectoryDerivative& d, const PhysConstants& c, double x) {
    const double m = c.mass;
    const double hbar = c.hbar;
    const double r = x - s.q_mean;
    const double xi = r / s.dq;
    const double rate = s.dq_dot / s.dq;
    const double rate_dot = d.dq_dot / s.dq - rate * rate; // d/dt (dq_dot / dq)
    const double dq2 = s.dq * s.dq;
    const double dq3 = dq2 * s.dq;

    // dS/dt at fixed x for S = m <v> x + (m/2) r^2 dq_dot/dq + S0
    const double s_dot = m * d.v_mean * x + 0.5 * m * (-2.0 * r * s.v_mean * rate + r * r * rate_dot) + d.S0;
    const double s_dot_x = m * d.v_mean + 0.5 * m * (-2.0 * s.v_mean * rate + 2.0 * r * rate_dot);
    const double v = s.v_mean + r * rate;
    const double g = profile.G(xi);
    const double gp = profile.dG(xi);
    const double gpp = profile.d2G(xi);

    const double phi = -s_dot - 0.5 * m * v * v + 0.5 * m * g * g / dq2 + 0.5 * hbar * gp / dq2;
    const double grad = -s_dot_x - m * v * rate + m * g * gp / dq3 + 0.5 * hbar * gpp / dq3;
    return {phi, grad};
}

namespace {

struct SynthTable {
    double x0;
    double dx;
    std::size_t nx;
    double t0;
    double dt;
    std::size_t nt;
    std::vector<double> phi;  // nt * nx
    std::vector<double> grad; // nt * nx

    // 4-point Lagrange stencil in index space; falls back to fewer points at the ends.
    static void stencil(double s, std::size_t n, std::size_t& first, std::array<double, 4>& w, std::size_t& count) {
        if (n == 1) {
            first = 0;
            count = 1;
            w = {1.0, 0.0, 0.0, 0.0};
            return;
        }
        if (n < 4) {
            const auto i = static_cast<std::size_t>(std::clamp(std::floor(s), 0.0, static_cast<double>(n - 2)));
            const double f = s - static_cast<double>(i);
            first = i;
            count = 2;
            w = {1.0 - f, f, 0.0, 0.0};
            return;
        }
        const auto i = static_cast<std::size_t>(std::clamp(std::floor(s), 1.0, static_cast<double>(n - 3)));
        const double f = s - static_cast<double>(i);
        first = i - 1;
        count = 4;
        w = {-f * (f - 1) * (f - 2) / 6.0, (f + 1) * (f - 1) * (f - 2) / 2.0, -(f + 1) * f * (f - 2) / 2.0,
             (f + 1) * f * (f - 1) / 6.0};
    }

    double eval(const std::vector<double>& data, double x, double t) const {
        const double st = (t - t0) / dt;
        const double span = static_cast<double>(nt - 1);
        if (st < -1e-9 || st > span + 1e-9) {
            std::ostringstream msg;
            msg << "synthesized potential queried at t=" << t << " outside its table [" << t0 << ", "
                << t0 + dt * span << "]";
            throw ValidationError(msg.str());
        }
        const double sx = std::clamp((x - x0) / dx, 0.0, static_cast<double>(nx - 1));
        std::size_t ft = 0, fx = 0, ct = 0, cx = 0;
        std::array<double, 4> wt{}, wx{};
        stencil(std::clamp(st, 0.0, span), nt, ft, wt, ct);
        // exact grid nodes skip the x interpolation
        const double rx = std::round(sx);
        const bool on_node = std::abs(sx - rx) < 1e-12;
        if (!on_node) stencil(sx, nx, fx, wx, cx);
        double acc = 0.0;
        for (std::size_t a = 0; a < ct; ++a) {
            const double* row = data.data() + (ft + a) * nx;
            double v;
            if (on_node) {
                v = row[static_cast<std::size_t>(rx)];
            } else {
                v = 0.0;
                for (std::size_t b = 0; b < cx; ++b) v += wx[b] * row[fx + b];
            }
            acc += wt[a] * v;
        }
        return acc;
    }
};

} // namespace

PotentialModel synthesize_potential(const StateProfile& profile, const TrajectoryRecord& record, const Grid1D& grid,
                                    const SynthesisOptions& options) {
    const std::size_t stride = std::max<std::size_t>(1, options.time_stride);
    const double node_dt = record.dt() * static_cast<double>(stride);
    if (node_dt > 1e-2 + 1e-15)
        throw ValidationError("trajectory record too sparse for synthesis (node spacing above 1e-2)");
    if ((record.size() - 1) % stride != 0)
        throw ValidationError("synthesis time stride must divide the number of record steps");

    auto table = std::make_shared<SynthTable>();
    table->x0 = grid.x_min();
    table->dx = grid.dx();
    table->nx = grid.size();
    table->t0 = record.t_begin();
    table->dt = node_dt;
    table->nt = (record.size() - 1) / stride + 1;
    table->phi.resize(table->nt * table->nx);
    table->grad.resize(table->nt * table->nx);

    const auto& c = record.constants();
    for (std::size_t k = 0; k < table->nt; ++k) {
        const auto& smp = record.samples()[k * stride];
        const auto [phi_q, grad_q] = synthesized_value(profile, smp.state, smp.derivative, c, smp.state.q_mean);
        (void)grad_q;
        const double target =
            options.gauge_reference ? options.gauge_reference->phi(smp.state.q_mean, smp.state.t) : 0.0;
        const double shift = target - phi_q;
        for (std::size_t j = 0; j < table->nx; ++j) {
            const auto [phi, grad] = synthesized_value(profile, smp.state, smp.derivative, c, grid.x(j));
            table->phi[k * table->nx + j] = phi + shift;
            table->grad[k * table->nx + j] = grad;
        }
    }

    std::ostringstream d;
    d << "synthesized from " << profile.name() << " profile over t in [" << record.t_begin() << ", " << record.t_end()
      << "]";
    std::shared_ptr<const SynthTable> tab = table;
    return PotentialModel(
        PotentialKind::SynthesizedTable, d.str(), [tab](double x, double t) { return tab->eval(tab->phi, x, t); },
        [tab](double x, double t) { return tab->eval(tab->grad, x, t); }, false);
}

// --- export -----------------------------------------------------------------

void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& out, std::size_t stride) {
    stride = std::max<std::size_t>(1, stride);
    out << kSchemaLine << "\n";
    out << "t,q_mean,v_mean,dq,dq_dot,S0,phi_mean,uncertainty_product,f,g,feedback_residual\n";
    const auto& ss = record.samples();
    for (std::size_t k = 0; k < ss.size(); ++k) {
        if (k % stride != 0 && k + 1 != ss.size()) continue;
        const auto& s = ss[k];
        out << fmt_num(s.state.t) << ',' << fmt_num(s.state.q_mean) << ',' << fmt_num(s.state.v_mean) << ','
            << fmt_num(s.state.dq) << ',' << fmt_num(s.state.dq_dot) << ',' << fmt_num(s.state.S0) << ','
            << fmt_num(s.expectations.phi_mean) << ',' << fmt_num(s.uncertainty_product) << ',' << fmt_num(s.f)
            << ',' << fmt_num(s.g) << ',' << fmt_num(s.feedback_residual) << '\n';
    }
}

} // namespace squeezelab
