#include "squeezelab/schrodinger_oracle.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/io.hpp"
#include "squeezelab/state_factory.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>

namespace squeezelab {

void PropagatorConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("propagator step must be positive");
    if (output_stride == 0) throw ValidationError("output stride must be at least 1");
    if (!(leakage_tol > 0.0)) throw ValidationError("leakage tolerance must be positive");
}

namespace {

double edge_amplitude(std::span<const cplx> psi) {
    double worst = 0.0;
    const std::size_t n = psi.size();
    for (std::size_t j = 0; j < kBoundaryMargin; ++j)
        worst = std::max({worst, std::abs(psi[j]), std::abs(psi[n - 1 - j])});
    return worst;
}

// Aligned in-place transform pair owned by one propagation. Planning goes
// through a global lock because FFTW's planner is not thread-safe.
class SplitStepFft {
public:
    explicit SplitStepFft(std::size_t n) : n_(n) {
        buf_ = static_cast<cplx*>(fftw_malloc(sizeof(cplx) * n));
        if (!buf_) throw NumericalError("FFT buffer allocation failed");
        auto* p = reinterpret_cast<fftw_complex*>(buf_);
        std::lock_guard lock(planner_mutex());
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), p, p, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(n), p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~SplitStepFft() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }
    SplitStepFft(const SplitStepFft&) = delete;
    SplitStepFft& operator=(const SplitStepFft&) = delete;

    std::span<cplx> data() { return {buf_, n_}; }
    void forward() { fftw_execute(fwd_); }
    void backward() { fftw_execute(bwd_); } // unnormalized

private:
    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }
    std::size_t n_;
    cplx* buf_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

// Plain complex product; avoids the C99 infinity handling of operator*.
inline void scale_by(std::span<cplx> v, const ComplexField& f) {
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double a = v[j].real(), b = v[j].imag();
        const double c = f[j].real(), d = f[j].imag();
        v[j] = cplx(a * c - b * d, a * d + b * c);
    }
}

double norm2(std::span<const cplx> psi, double dx) {
    double acc = 0.0;
    for (const auto& z : psi) acc += std::norm(z);
    return acc * dx;
}

} // namespace

Propagation propagate(const WaveFunction& wf0, const PotentialModel& potential, const PropagatorConfig& cfg,
                      double t0, double t_end) {
    cfg.validate();
    if (!std::isfinite(t0) || !std::isfinite(t_end) || t_end < t0)
        throw ValidationError("propagation span must be finite and forward");
    const auto& grid = wf0.grid();
    const auto& c = wf0.constants();
    const std::size_t n = grid.size();
    const double dx = grid.dx();
    const double dt = cfg.dt;
    const auto steps = static_cast<std::size_t>(std::llround((t_end - t0) / dt));

    // the 1/n of the inverse transform is folded into the kinetic factor
    ComplexField kinetic(n);
    {
        const auto k = grid.wavenumbers();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j)
            kinetic[j] = inv_n * std::polar(1.0, -c.hbar * k[j] * k[j] * dt / (2.0 * c.mass));
    }
    ComplexField kick(n);
    auto fill_kick = [&](double t) {
        for (std::size_t j = 0; j < n; ++j) kick[j] = std::polar(1.0, -potential.phi(grid.x(j), t) * dt / (2.0 * c.hbar));
    };
    if (potential.time_independent()) fill_kick(t0);

    SplitStepFft fft(n);
    auto psi = fft.data();
    std::copy(wf0.psi().begin(), wf0.psi().end(), psi.begin());
    auto snapshot = [&] { return ComplexField(psi.begin(), psi.end()); };
    const double n0 = norm2(psi, dx);

    Propagation out;
    out.frames.push_back({t0, WaveFunction(grid, snapshot(), c, cfg.leakage_tol)});
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = t0 + dt * static_cast<double>(s);
        if (!potential.time_independent()) fill_kick(t + 0.5 * dt);
        scale_by(psi, kick);
        fft.forward();
        scale_by(psi, kinetic);
        fft.backward();
        scale_by(psi, kick);

        const double t_next = t0 + dt * static_cast<double>(s + 1);
        const double edge = edge_amplitude(psi);
        if (!(edge <= cfg.leakage_tol)) {
            std::ostringstream msg;
            msg << "wave packet leaked to the grid boundary at t=" << t_next << ": |psi| = " << edge << " (limit "
                << cfg.leakage_tol << ")";
            throw NumericalError(msg.str());
        }
        out.max_norm_drift = std::max(out.max_norm_drift, std::abs(norm2(psi, dx) - n0));
        if ((s + 1) % cfg.output_stride == 0 || s + 1 == steps)
            out.frames.push_back({t_next, WaveFunction(grid, snapshot(), c, cfg.leakage_tol)});
    }
    out.steps = steps;
    return out;
}

double halving_gap(const WaveFunction& wf0, const PotentialModel& potential, const PropagatorConfig& cfg, double t0,
                   double t_end, const WaveFunction* final_state) {
    auto only_ends = cfg;
    only_ends.output_stride = std::numeric_limits<std::size_t>::max();
    std::optional<Propagation> coarse;
    if (!final_state) {
        coarse = propagate(wf0, potential, only_ends, t0, t_end);
        final_state = &coarse->frames.back().wf;
    }
    only_ends.dt = 0.5 * cfg.dt;
    const auto fine = propagate(wf0, potential, only_ends, t0, t_end);
    // norms drift by ~1e-12, so the overlap may sit a hair above one
    return std::abs(1.0 - overlap(*final_state, fine.frames.back().wf));
}

double energy(const WaveFunction& wf, const PotentialModel& potential, double t) {
    const auto obs = observables(wf);
    const auto& grid = wf.grid();
    double pot = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) pot += std::norm(wf.psi()[j]) * potential.phi(grid.x(j), t);
    return obs.kinetic_energy + pot * grid.dx();
}

// --- model comparison -------------------------------------------------------

double FidelityReport::min_overlap() const {
    double m = 1.0;
    for (const auto& r : rows) m = std::min(m, r.overlap);
    return m;
}

double FidelityReport::max_density_l2() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, r.density_l2);
    return m;
}

FidelityReport compare_with_model(const std::vector<Frame>& frames, const StateProfile& profile,
                                  const TrajectoryRecord& record) {
    FidelityReport rep;
    rep.rows.reserve(frames.size());
    for (const auto& fr : frames) {
        const auto k = record.index_of(fr.t);
        if (!k) {
            std::ostringstream msg;
            msg << "frame time " << fr.t << " has no matching trajectory sample";
            throw ValidationError(msg.str());
        }
        const auto& state = record.samples()[*k].state;
        const auto& grid = fr.wf.grid();
        const auto model = assemble_state(profile, state, grid, fr.wf.constants());
        const auto pde = fr.wf.normalized();
        FidelityRow row;
        row.t = fr.t;
        row.overlap = overlap(pde, model);
        double acc = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double d = std::norm(pde.psi()[j]) - std::norm(model.psi()[j]);
            acc += d * d;
        }
        row.density_l2 = std::sqrt(acc * grid.dx());
        const auto obs = observables(pde);
        row.q_mean_delta = obs.q_mean - state.q_mean;
        row.dq_delta = obs.dq - state.dq;
        rep.rows.push_back(row);
    }
    return rep;
}

void write_fidelity_csv(const FidelityReport& report, std::ostream& out) {
    out << kSchemaLine << "\n";
    out << "t,overlap,density_l2,q_mean_delta,dq_delta\n";
    for (const auto& r : report.rows)
        out << fmt_num(r.t) << ',' << fmt_num(r.overlap) << ',' << fmt_num(r.density_l2) << ','
            << fmt_num(r.q_mean_delta) << ',' << fmt_num(r.dq_delta) << '\n';
}

void write_frame_csv(const Frame& frame, std::ostream& out) {
    out << kSchemaLine << "\n";
    out << "# t=" << fmt_num(frame.t) << "\n";
    out << "x,re_psi,im_psi\n";
    const auto& grid = frame.wf.grid();
    for (std::size_t j = 0; j < grid.size(); ++j)
        out << fmt_num(grid.x(j)) << ',' << fmt_num(frame.wf.psi()[j].real()) << ','
            << fmt_num(frame.wf.psi()[j].imag()) << '\n';
}

// --- imaginary time ---------------------------------------------------------

WaveFunction relax_ground_state(const WaveFunction& guess, const PotentialModel& potential,
                                const RelaxOptions& options) {
    if (!potential.time_independent()) throw ValidationError("ground-state relaxation needs a static potential");
    if (!(options.dtau > 0.0)) throw ValidationError("imaginary time step must be positive");
    const auto& grid = guess.grid();
    const auto& c = guess.constants();
    const std::size_t n = grid.size();
    const double dx = grid.dx();

    RealField kinetic(n), half(n);
    const auto k = grid.wavenumbers();
    for (std::size_t j = 0; j < n; ++j) {
        kinetic[j] = std::exp(-c.hbar * k[j] * k[j] * options.dtau / (2.0 * c.mass));
        half[j] = std::exp(-potential.phi(grid.x(j), 0.0) * options.dtau / (2.0 * c.hbar));
    }

    ComplexField psi = guess.psi();
    ComplexField spec(n);
    auto renormalize = [&] {
        const double s = 1.0 / std::sqrt(norm2(psi, dx));
        for (auto& z : psi) z *= s;
    };
    renormalize();
    double e_prev = energy(WaveFunction(grid, psi, c, 1.0), potential, 0.0);
    for (std::size_t s = 0; s < options.max_steps; ++s) {
        for (std::size_t j = 0; j < n; ++j) psi[j] *= half[j];
        fft_forward(psi, spec);
        for (std::size_t j = 0; j < n; ++j) spec[j] *= kinetic[j];
        fft_inverse(spec, psi);
        for (std::size_t j = 0; j < n; ++j) psi[j] *= half[j];
        renormalize();
        if (s % 100 == 99) {
            const double e = energy(WaveFunction(grid, psi, c, 1.0), potential, 0.0);
            if (std::abs(e - e_prev) < 100.0 * options.energy_tol) {
                return WaveFunction(grid, std::move(psi), c, guess.boundary_tol());
            }
            e_prev = e;
        }
    }
    throw NumericalError("imaginary-time relaxation did not converge");
}

} // namespace squeezelab
