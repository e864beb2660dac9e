#include "squeezelab/potential.hpp"

#include "squeezelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace squeezelab {

std::string to_string(PotentialKind kind) {
    switch (kind) {
    case PotentialKind::Harmonic: return "harmonic";
    case PotentialKind::TimeHarmonic: return "time-harmonic";
    case PotentialKind::Polynomial: return "polynomial";
    case PotentialKind::Analytic: return "analytic";
    case PotentialKind::SynthesizedTable: return "synthesized-table";
    }
    return "unknown";
}

PotentialModel::PotentialModel(PotentialKind kind, std::string description, Fn phi, Fn grad_phi,
                               bool time_independent)
    : kind_(kind), description_(std::move(description)), phi_(std::move(phi)), grad_(std::move(grad_phi)),
      time_independent_(time_independent) {
    if (!phi_ || !grad_) throw ValidationError("potential requires both phi and its gradient");
}

RealField PotentialModel::sample(const Grid1D& grid, double t) const {
    RealField out(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) out[j] = phi_(grid.x(j), t);
    return out;
}

double PotentialModel::gradient_mismatch(std::span<const double> points, double t, double step) const {
    double worst = 0.0;
    for (double x : points) {
        const double fd = (phi_(x + step, t) - phi_(x - step, t)) / (2.0 * step);
        const double g = grad_(x, t);
        worst = std::max(worst, std::abs(fd - g) / std::max(std::abs(g), 1.0));
    }
    return worst;
}

namespace potentials {

PotentialModel free_particle() {
    return PotentialModel(
        PotentialKind::Polynomial, "free", [](double, double) { return 0.0; },
        [](double, double) { return 0.0; }, true);
}

PotentialModel harmonic(const PhysConstants& constants, double omega, double center) {
    const double k = constants.mass * omega * omega;
    std::ostringstream d;
    d << "harmonic omega=" << omega << " center=" << center;
    return PotentialModel(
        PotentialKind::Harmonic, d.str(),
        [k, center](double x, double) { return 0.5 * k * (x - center) * (x - center); },
        [k, center](double x, double) { return k * (x - center); }, true);
}

PotentialModel time_harmonic(const PhysConstants& constants, std::function<double(double)> omega,
                             std::string description) {
    const double m = constants.mass;
    auto w = omega;
    return PotentialModel(
        PotentialKind::TimeHarmonic, std::move(description),
        [m, w](double x, double t) {
            const double om = w(t);
            return 0.5 * m * om * om * x * x;
        },
        [m, w = std::move(omega)](double x, double t) {
            const double om = w(t);
            return m * om * om * x;
        },
        false);
}

PotentialModel quench(const PhysConstants& constants, double omega_before, double omega_after,
                      double t_switch) {
    std::ostringstream d;
    d << "quench omega " << omega_before << " -> " << omega_after << " at t=" << t_switch;
    return time_harmonic(
        constants, [=](double t) { return t < t_switch ? omega_before : omega_after; }, d.str());
}

PotentialModel polynomial(std::vector<double> coeffs) {
    std::ostringstream d;
    d << "polynomial degree " << (coeffs.empty() ? 0 : coeffs.size() - 1);
    auto eval = [coeffs](double x, double) {
        double acc = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
        return acc;
    };
    auto deriv = [coeffs](double x, double) {
        double acc = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * coeffs[k];
        return acc;
    };
    return PotentialModel(PotentialKind::Polynomial, d.str(), eval, deriv, true);
}

PotentialModel poschl_teller(const PhysConstants& constants, double alpha) {
    const double depth = constants.hbar * constants.hbar * alpha * alpha / constants.mass;
    std::ostringstream d;
    d << "poschl-teller alpha=" << alpha;
    return PotentialModel(
        PotentialKind::Analytic, d.str(),
        [depth, alpha](double x, double) {
            const double s = 1.0 / std::cosh(alpha * x);
            return -depth * s * s;
        },
        [depth, alpha](double x, double) {
            const double s = 1.0 / std::cosh(alpha * x);
            return 2.0 * depth * alpha * s * s * std::tanh(alpha * x);
        },
        true);
}

} // namespace potentials

} // namespace squeezelab
