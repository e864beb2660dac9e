#include "squeezelab/wavefunction.hpp"

#include "squeezelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace squeezelab {

WaveFunction::WaveFunction(Grid1D grid, ComplexField psi, PhysConstants constants, double boundary_tol)
    : grid_(grid), psi_(std::move(psi)), constants_(constants), boundary_tol_(boundary_tol) {
    constants_.validate();
    if (psi_.size() != grid_.size())
        throw ValidationError("wavefunction length does not match grid");
    for (const auto& z : psi_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw ValidationError("wavefunction contains non-finite samples");
    const double edge = boundary_amplitude();
    if (edge > boundary_tol_) {
        std::ostringstream msg;
        msg << "packet reaches the grid boundary: |psi| = " << edge << " within " << kBoundaryMargin
            << " points of an edge (limit " << boundary_tol_ << ")";
        throw ValidationError(msg.str());
    }
}

WaveFunction WaveFunction::make_normalized(Grid1D grid, ComplexField psi, PhysConstants constants,
                                           double boundary_tol) {
    return WaveFunction(grid, std::move(psi), constants, boundary_tol).normalized();
}

double WaveFunction::norm_squared() const {
    const auto rho = density();
    return quadrature(grid_, rho);
}

RealField WaveFunction::density() const {
    RealField rho(psi_.size());
    std::transform(psi_.begin(), psi_.end(), rho.begin(), [](cplx z) { return std::norm(z); });
    return rho;
}

WaveFunction WaveFunction::normalized() const {
    const double n2 = norm_squared();
    if (!(n2 > 0.0)) throw ValidationError("cannot normalize a zero wavefunction");
    ComplexField scaled = psi_;
    const double s = 1.0 / std::sqrt(n2);
    for (auto& z : scaled) z *= s;
    return WaveFunction(grid_, std::move(scaled), constants_, boundary_tol_);
}

double WaveFunction::boundary_amplitude() const {
    const std::size_t n = psi_.size();
    const std::size_t m = std::min(kBoundaryMargin, n / 2);
    double worst = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        worst = std::max(worst, std::abs(psi_[j]));
        worst = std::max(worst, std::abs(psi_[n - 1 - j]));
    }
    return worst;
}

Observables observables(const WaveFunction& wf) {
    const auto& grid = wf.grid();
    const auto& psi = wf.psi();
    const double hbar = wf.constants().hbar;
    const double norm = wf.norm_squared();
    if (std::abs(norm - 1.0) > kNormRejectTol) {
        std::ostringstream msg;
        msg << "observables require a normalized state, norm^2 = " << norm;
        throw ValidationError(msg.str());
    }

    const auto dpsi = derivative(grid, wf.values(), 1);
    const std::size_t n = grid.size();

    double q = 0.0;
    double p = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        q += grid.x(j) * std::norm(psi[j]);
        p += hbar * std::imag(std::conj(psi[j]) * dpsi[j]);
    }
    q *= grid.dx();
    p *= grid.dx();

    double var_q = 0.0;
    double var_p = 0.0;
    double anti = 0.0;
    double kinetic = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double dx_j = grid.x(j) - q;
        // (P psi)(x) = -i hbar psi' - <p> psi
        const cplx ppsi = cplx(0.0, -hbar) * dpsi[j] - p * psi[j];
        var_q += dx_j * dx_j * std::norm(psi[j]);
        var_p += std::norm(ppsi);
        anti += std::real(std::conj(psi[j]) * dx_j * ppsi);
        kinetic += hbar * hbar * std::norm(dpsi[j]);
    }
    const double dx = grid.dx();
    Observables obs;
    obs.q_mean = q;
    obs.p_mean = p;
    obs.dq = std::sqrt(var_q * dx);
    obs.dp = std::sqrt(var_p * dx);
    obs.anticommutator = anti * dx;
    obs.kinetic_energy = kinetic * dx / (2.0 * wf.constants().mass);
    return obs;
}

cplx inner_product(const WaveFunction& a, const WaveFunction& b) {
    if (!(a.grid() == b.grid())) throw ValidationError("inner product requires a shared grid");
    cplx sum = 0.0;
    for (std::size_t j = 0; j < a.psi().size(); ++j) sum += std::conj(a.psi()[j]) * b.psi()[j];
    return sum * a.grid().dx();
}

double overlap(const WaveFunction& a, const WaveFunction& b) { return std::abs(inner_product(a, b)); }

} // namespace squeezelab
