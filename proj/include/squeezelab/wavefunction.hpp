#pragma once

#include "squeezelab/grid.hpp"

#include <span>

namespace squeezelab {

/// Largest |psi| tolerated within kBoundaryMargin points of either grid edge.
inline constexpr double kBoundaryAmplitudeTol = 1e-12;
inline constexpr std::size_t kBoundaryMargin = 5;

/// A state psi(x) sampled on a grid. Immutable after construction.
///
/// Construction checks that the samples are finite and that the packet
/// decays below `boundary_tol` within five points of both edges. The norm
/// is not enforced here; use normalized() or make_normalized().
class WaveFunction {
public:
    WaveFunction(Grid1D grid, ComplexField psi, PhysConstants constants = {},
                 double boundary_tol = kBoundaryAmplitudeTol);

    /// Builds and rescales to unit L2 norm.
    static WaveFunction make_normalized(Grid1D grid, ComplexField psi, PhysConstants constants = {},
                                        double boundary_tol = kBoundaryAmplitudeTol);

    const Grid1D& grid() const { return grid_; }
    const ComplexField& psi() const { return psi_; }
    std::span<const cplx> values() const { return psi_; }
    const PhysConstants& constants() const { return constants_; }
    double boundary_tol() const { return boundary_tol_; }

    double norm_squared() const;
    RealField density() const;
    WaveFunction normalized() const;
    /// Largest |psi| over the boundary margin on either side.
    double boundary_amplitude() const;

private:
    Grid1D grid_;
    ComplexField psi_;
    PhysConstants constants_;
    double boundary_tol_;
};

struct Observables {
    double q_mean = 0.0;
    double p_mean = 0.0;
    double dq = 0.0;
    double dp = 0.0;
    /// <{Q, P}>/2 with Q = q - <q>, P = p - <p>.
    double anticommutator = 0.0;
    double kinetic_energy = 0.0;

    double uncertainty_product() const { return dq * dp; }
};

inline constexpr double kNormRejectTol = 1e-6;

/// Position/momentum moments of a state. Rejects states whose norm deviates
/// from one by more than kNormRejectTol.
Observables observables(const WaveFunction& wf);

/// <psi_a | psi_b> on a shared grid.
cplx inner_product(const WaveFunction& a, const WaveFunction& b);
/// |<a|b>|.
double overlap(const WaveFunction& a, const WaveFunction& b);

} // namespace squeezelab
