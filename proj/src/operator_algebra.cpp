#include "squeezelab/operator_algebra.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/hydrodynamics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace squeezelab {

namespace {

constexpr double kSingularGuard = 1e-10;

double exact_factor(double f) {
    // (1 - e^{-4f}) / (4f), continuous through f = 0
    if (std::abs(f) < 1e-12) return 1.0;
    return -std::expm1(-4.0 * f) / (4.0 * f);
}

double coefficient_factor(SqueezeCoefficient c, double f) {
    return c == SqueezeCoefficient::Exact ? exact_factor(f) : 1.0 - 2.0 * f;
}

double l2_norm(std::span<const cplx> v, double dx) {
    double acc = 0.0;
    for (const auto& z : v) acc += std::norm(z);
    return std::sqrt(acc * dx);
}

// Band-limited interpolation of samples on a periodic grid; zero outside it.
class SpectralInterpolant {
public:
    SpectralInterpolant(const Grid1D& grid, std::span<const cplx> samples)
        : grid_(grid), coeffs_(fft_forward(samples)), k_(grid.wavenumbers()) {
        const double inv = 1.0 / static_cast<double>(grid.size());
        for (auto& c : coeffs_) c *= inv;
    }

    cplx operator()(double y) const {
        if (y < grid_.x_min() || y > grid_.x_max()) return 0.0;
        const double s = y - grid_.x_min();
        const std::size_t n = coeffs_.size();
        cplx acc = coeffs_[0];
        for (std::size_t j = 1; j < n; ++j) {
            if (j == n / 2) {
                acc += coeffs_[j] * std::cos(k_[j] * s);
            } else {
                acc += coeffs_[j] * std::polar(1.0, k_[j] * s);
            }
        }
        return acc;
    }

private:
    Grid1D grid_;
    ComplexField coeffs_;
    RealField k_;
};

void require_dense(const Grid1D& grid) {
    if (grid.size() > kMaxDenseGrid) {
        std::ostringstream msg;
        msg << "dense operator route limited to " << kMaxDenseGrid << " points (grid has " << grid.size() << ")";
        throw ValidationError(msg.str());
    }
}

OperatorMatrix exponentiate(Eigen::MatrixXcd generator, std::string description) {
    Eigen::MatrixXcd out = generator.exp();
    if (!out.allFinite()) throw NumericalError("matrix exponential did not converge: " + description);
    return {std::move(out), std::move(description)};
}

std::size_t interior_begin(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(0.5 * (1.0 - fraction) * static_cast<double>(n)));
}

} // namespace

// --- parameters -------------------------------------------------------------

SqueezeParams SqueezeParams::from_dispersion(double dq0, double dq, double dq_dot, const PhysConstants& c) {
    c.validate();
    if (!(dq0 > 0.0) || !(dq > 0.0) || !std::isfinite(dq0) || !std::isfinite(dq))
        throw ValidationError("squeeze parameters need positive finite dispersions");
    if (!std::isfinite(dq_dot)) throw ValidationError("dispersion rate must be finite");
    SqueezeParams p;
    p.dq0 = dq0;
    p.dq = dq;
    p.dq_dot = dq_dot;
    p.f = -0.5 * std::log(dq / dq0);
    const double denom = 1.0 - 2.0 * p.f;
    if (std::abs(denom) < kSingularGuard) {
        if (dq_dot != 0.0) {
            std::ostringstream msg;
            msg << "squeeze rate g is singular at 1 - 2f = 0 (dq = dq0/e, dq = " << dq << ")";
            throw ValidationError(msg.str());
        }
        p.g = 0.0;
        return p;
    }
    p.g = c.mass / c.hbar * (dq_dot / dq) / denom;
    return p;
}

SqueezeParams SqueezeParams::from_trajectory(const TrajectoryState& traj, double dq0, const PhysConstants& c) {
    traj.validate();
    return from_dispersion(dq0, traj.dq, traj.dq_dot, c);
}

SqueezeParams SqueezeParams::from_fg(double f, double g, double dq0, const PhysConstants& c) {
    c.validate();
    if (!std::isfinite(f) || !std::isfinite(g) || !(dq0 > 0.0)) throw ValidationError("invalid squeeze parameters");
    SqueezeParams p;
    p.f = f;
    p.g = g;
    p.dq0 = dq0;
    p.dq = dq0 * std::exp(-2.0 * f);
    p.dq_dot = c.hbar / c.mass * g * (1.0 - 2.0 * f) * p.dq;
    return p;
}

std::string to_string(SqueezeCoefficient c) {
    return c == SqueezeCoefficient::Exact ? "exact" : "first-order";
}

SqueezeCoefficient parse_squeeze_coefficient(const std::string& name) {
    if (name == "exact") return SqueezeCoefficient::Exact;
    if (name == "first-order") return SqueezeCoefficient::FirstOrder;
    throw ValidationError("unknown squeeze coefficient '" + name + "' (expected exact or first-order)");
}

// --- displacement -----------------------------------------------------------

WaveFunction displace(const WaveFunction& wf, double q_shift, double p_shift, double s0) {
    if (!std::isfinite(q_shift) || !std::isfinite(p_shift) || !std::isfinite(s0))
        throw ValidationError("displacement parameters must be finite");
    const auto& grid = wf.grid();
    const double hbar = wf.constants().hbar;
    const std::size_t n = grid.size();

    ComplexField shifted;
    if (q_shift == 0.0) {
        shifted = wf.psi();
    } else {
        auto spec = fft_forward(wf.psi());
        const auto k = grid.wavenumbers();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == n / 2) {
                spec[j] *= std::cos(k[j] * q_shift); // keep the Nyquist mode real-symmetric
            } else {
                spec[j] *= std::polar(1.0, -k[j] * q_shift);
            }
        }
        shifted = fft_inverse(spec);
    }
    for (std::size_t j = 0; j < n; ++j) shifted[j] *= std::polar(1.0, (p_shift * grid.x(j) + s0) / hbar);
    return WaveFunction(grid, std::move(shifted), wf.constants(), wf.boundary_tol());
}

// --- closed-form squeeze ----------------------------------------------------

SqueezeResult squeeze_closed_form(const WaveFunction& psi0, const SqueezeParams& params,
                                  SqueezeCoefficient coefficient) {
    const auto& grid = psi0.grid();
    const double f = params.f;
    const double scale = std::exp(2.0 * f);
    const double phase_coeff = coefficient_factor(coefficient, f) * params.g * std::exp(4.0 * f) /
                               (params.dq0 * params.dq0);
    const double amp = std::exp(f);

    ComplexField out(grid.size());
    if (f == 0.0) {
        for (std::size_t j = 0; j < grid.size(); ++j) out[j] = psi0.psi()[j];
    } else {
        const SpectralInterpolant interp(grid, psi0.psi());
        for (std::size_t j = 0; j < grid.size(); ++j) out[j] = interp(scale * grid.x(j));
    }
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.x(j);
        out[j] *= amp * std::polar(1.0, phase_coeff * x * x);
    }
    const double norm = l2_norm(out, grid.dx());
    if (!(norm > 0.0)) throw NumericalError("squeezed state vanished on the grid");
    WaveFunction wf(grid, std::move(out), psi0.constants(), psi0.boundary_tol());
    return {wf.normalized(), norm, phase_coeff};
}

// --- dense route ------------------------------------------------------------

ComplexField OperatorMatrix::apply(std::span<const cplx> v) const {
    if (static_cast<Eigen::Index>(v.size()) != matrix.cols()) throw ValidationError("operator/vector size mismatch");
    Eigen::Map<const Eigen::VectorXcd> in(v.data(), static_cast<Eigen::Index>(v.size()));
    Eigen::VectorXcd res = matrix * in;
    return ComplexField(res.data(), res.data() + res.size());
}

double OperatorMatrix::unitarity_defect(double interior_fraction) const {
    const auto n = static_cast<std::size_t>(matrix.rows());
    const auto b = static_cast<Eigen::Index>(interior_begin(n, interior_fraction));
    const auto len = static_cast<Eigen::Index>(n) - 2 * b;
    const Eigen::MatrixXcd gram = matrix.adjoint() * matrix;
    const Eigen::MatrixXcd block = gram.block(b, b, len, len) - Eigen::MatrixXcd::Identity(len, len);
    return block.cwiseAbs().maxCoeff();
}

Eigen::MatrixXd derivative_matrix(const Grid1D& grid) {
    require_dense(grid);
    const std::size_t n = grid.size();
    Eigen::MatrixXd d(n, n);
    RealField unit(n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        unit[l] = 1.0;
        const auto col = derivative(grid, unit, 1);
        for (std::size_t j = 0; j < n; ++j) d(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = col[j];
        unit[l] = 0.0;
    }
    return d;
}

namespace {

Eigen::VectorXd coordinate_vector(const Grid1D& grid) {
    Eigen::VectorXd x(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) x[static_cast<Eigen::Index>(j)] = grid.x(j);
    return x;
}

// {q, p} = q p + p q with p = -i hbar D.
Eigen::MatrixXcd anticommutator_qp(const Eigen::MatrixXd& d, const Eigen::VectorXd& x, double hbar) {
    const Eigen::MatrixXd sym = x.asDiagonal() * d + d * x.asDiagonal();
    return cplx(0.0, -hbar) * sym.cast<cplx>();
}

} // namespace

OperatorMatrix squeeze_matrix_oracle(const SqueezeParams& params, const Grid1D& grid, const PhysConstants& c) {
    require_dense(grid);
    c.validate();
    const auto d = derivative_matrix(grid);
    const auto x = coordinate_vector(grid);
    Eigen::MatrixXcd m = (params.f / c.hbar) * anticommutator_qp(d, x, c.hbar);
    m.diagonal() += (params.g / (params.dq0 * params.dq0) * x.array().square()).matrix().cast<cplx>();
    std::ostringstream desc;
    desc << "exp(iM), M = (" << params.f << "/hbar){q,p} + (" << params.g << "/dq0^2) q^2";
    return exponentiate(cplx(0.0, 1.0) * m, desc.str());
}

OperatorMatrix dilation_matrix(const Grid1D& grid, double s) {
    require_dense(grid);
    const auto d = derivative_matrix(grid);
    const auto x = coordinate_vector(grid);
    Eigen::MatrixXd b = x.asDiagonal() * d;
    b.diagonal().array() += 0.5;
    std::ostringstream desc;
    desc << "exp(" << s << " * (1 + 2 x d/dx) / 2)";
    return exponentiate((s * b).cast<cplx>(), desc.str());
}

CommutatorReport commutator_check(const Grid1D& grid, const PhysConstants& c, double interior_fraction) {
    require_dense(grid);
    const double hbar = c.hbar;
    const auto d = derivative_matrix(grid);
    const auto x = coordinate_vector(grid);
    const Eigen::MatrixXcd a = anticommutator_qp(d, x, hbar);
    const Eigen::VectorXcd x2 = x.array().square().matrix().cast<cplx>();
    // [A, Q^2] = A Q^2 - Q^2 A
    const Eigen::MatrixXcd comm = a * x2.asDiagonal() - x2.asDiagonal() * a;
    Eigen::MatrixXcd residual = comm;
    residual.diagonal() += cplx(0.0, 4.0 * hbar) * x2;
    Eigen::MatrixXcd target = Eigen::MatrixXcd::Zero(comm.rows(), comm.cols());
    target.diagonal() = 4.0 * hbar * x2;

    const auto n = static_cast<Eigen::Index>(grid.size());
    const auto b = static_cast<Eigen::Index>(interior_begin(grid.size(), interior_fraction));
    const auto len = n - 2 * b;

    CommutatorReport rep;
    rep.entrywise_ratio = residual.middleRows(b, len).norm() / target.middleRows(b, len).norm();

    // Hermite-Gaussian vectors well inside the box
    const double sigma = 0.05 * (grid.x_max() - grid.x_min());
    for (int order = 0; order < 6; ++order) {
        Eigen::VectorXcd v(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double y = x[j] / sigma;
            double h0 = 1.0, h1 = 2.0 * y;
            double h = order == 0 ? h0 : h1;
            for (int k = 2; k <= order; ++k) {
                h = 2.0 * y * h1 - 2.0 * (k - 1) * h0;
                h0 = h1;
                h1 = h;
            }
            v[j] = h * std::exp(-0.5 * y * y);
        }
        const Eigen::VectorXcd r = residual * v;
        const Eigen::VectorXcd t = target * v;
        rep.vector_residual =
            std::max(rep.vector_residual, r.segment(b, len).norm() / t.segment(b, len).norm());
        ++rep.vectors;
    }
    return rep;
}

ComplexField align_global_phase(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) throw ValidationError("cannot align states of different sizes");
    std::size_t k = 0;
    for (std::size_t j = 1; j < a.size(); ++j)
        if (std::abs(a[j]) > std::abs(a[k])) k = j;
    if (std::abs(b[k]) == 0.0) throw NumericalError("cannot align phases: reference point has zero amplitude");
    const cplx rot = std::polar(1.0, std::arg(a[k]) - std::arg(b[k]));
    ComplexField out(b.begin(), b.end());
    for (auto& z : out) z *= rot;
    return out;
}

OracleComparison compare_with_matrix_oracle(const WaveFunction& psi0, const SqueezeParams& params,
                                            SqueezeCoefficient coefficient) {
    const auto closed = squeeze_closed_form(psi0, params, coefficient);
    const auto op = squeeze_matrix_oracle(params, psi0.grid(), psi0.constants());
    auto oracle = op.apply(psi0.psi());
    const double dx = psi0.grid().dx();
    OracleComparison cmp;
    cmp.closed_norm_before = closed.norm_before;
    cmp.oracle_norm = l2_norm(oracle, dx);
    for (auto& z : oracle) z /= cmp.oracle_norm;
    const auto aligned = align_global_phase(closed.state.psi(), oracle);
    double acc = 0.0;
    for (std::size_t j = 0; j < aligned.size(); ++j) acc += std::norm(aligned[j] - closed.state.psi()[j]);
    cmp.l2_discrepancy = std::sqrt(acc * dx);
    return cmp;
}

// --- operator-route squeezed states -----------------------------------------

QuadraticPhaseFit fit_quadratic_phase(const WaveFunction& wf, double centre) {
    const auto fields = decompose(wf.normalized(), 1e-14);
    const double hbar = wf.constants().hbar;
    const double cut = 1e-6 * *std::max_element(fields.rho.begin(), fields.rho.end());
    Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t j = 0; j < fields.rho.size(); ++j) {
        if (!fields.valid[j] || fields.rho[j] < cut) continue;
        const double r = wf.grid().x(j) - centre;
        const Eigen::Vector3d basis(1.0, r, r * r);
        normal += fields.rho[j] * basis * basis.transpose();
        rhs += fields.rho[j] * basis * (fields.S[j] / hbar);
    }
    const Eigen::Vector3d sol = normal.ldlt().solve(rhs);
    return {sol[0], sol[1], sol[2]};
}

SqueezedStateReport squeezed_state(const WaveFunction& psi0, const TrajectoryState& traj,
                                   const StateProfile& profile, SqueezeCoefficient coefficient) {
    const auto& c = psi0.constants();
    const auto obs = observables(psi0);
    if (std::abs(obs.q_mean) > 1e-8 || std::abs(obs.p_mean) > 1e-8)
        throw ValidationError("reference state must be centred at rest");
    const auto params = SqueezeParams::from_trajectory(traj, obs.dq, c);
    const auto squeezed = squeeze_closed_form(psi0, params, coefficient);
    auto state = displace(squeezed.state, traj.q_mean, c.mass * traj.v_mean, traj.S0);
    auto reference = assemble_state(profile, traj, psi0.grid(), c);

    const double e4f = std::exp(4.0 * params.f);
    const double base = params.g * e4f / (params.dq0 * params.dq0);
    SqueezedStateReport rep{state, reference, params, coefficient, squeezed.norm_before, 0.0, 0.0, {}, {}, 0.0, 0.0, 0.0};
    rep.overlap = overlap(state, reference);
    for (std::size_t j = 0; j < state.psi().size(); ++j)
        rep.modulus_max_diff =
            std::max(rep.modulus_max_diff, std::abs(std::abs(state.psi()[j]) - std::abs(reference.psi()[j])));
    rep.fit_operator = fit_quadratic_phase(state, traj.q_mean);
    rep.fit_reference = fit_quadratic_phase(reference, traj.q_mean);
    rep.target_coefficient = c.mass * traj.dq_dot / (2.0 * c.hbar * traj.dq);
    rep.first_order_coefficient = (1.0 - 2.0 * params.f) * base;
    rep.exact_coefficient = exact_factor(params.f) * base;
    return rep;
}

nlohmann::json to_json(const SqueezeParams& p) {
    return {{"f", p.f}, {"g", p.g}, {"dq0", p.dq0}, {"dq", p.dq}, {"dq_dot", p.dq_dot}};
}

nlohmann::json to_json(const SqueezedStateReport& r) {
    auto ratio = [&](double v) -> nlohmann::json {
        if (r.target_coefficient == 0.0) return nullptr;
        return v / r.target_coefficient;
    };
    return {
        {"params", to_json(r.params)},
        {"coefficient", to_string(r.coefficient)},
        {"norm_before_renormalization", r.norm_before},
        {"overlap", r.overlap},
        {"modulus_max_diff", r.modulus_max_diff},
        {"phase_fit_operator", {{"a", r.fit_operator.a}, {"b", r.fit_operator.b}, {"c", r.fit_operator.c}}},
        {"phase_fit_reference", {{"a", r.fit_reference.a}, {"b", r.fit_reference.b}, {"c", r.fit_reference.c}}},
        {"target_quadratic_coefficient", r.target_coefficient},
        {"first_order_quadratic_coefficient", r.first_order_coefficient},
        {"exact_quadratic_coefficient", r.exact_coefficient},
        {"first_order_to_target_ratio", ratio(r.first_order_coefficient)},
        {"exact_to_target_ratio", ratio(r.exact_coefficient)},
    };
}

} // namespace squeezelab
