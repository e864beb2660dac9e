#pragma once

#include "squeezelab/grid.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace squeezelab {

/// Shape of a coherent-state family in the scaled coordinate
/// xi = (x - <q>) / dq. Implementations supply the log-density and the
/// osmotic shape function G = (hbar/2m) d/dxi ln rho~ with two derivatives.
class ProfileShape {
public:
    virtual ~ProfileShape() = default;

    virtual double log_density(double xi) const = 0;
    virtual double G(double xi) const = 0;
    virtual double dG(double xi) const = 0;
    virtual double d2G(double xi) const = 0;
    /// Half-width beyond which rho~ is negligible (below ~1e-30).
    virtual double support_halfwidth() const = 0;
    virtual std::string name() const = 0;
};

/// Moments of a profile measured by quadrature over its support.
struct ProfileMoments {
    double mass = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double fourth = 0.0;       ///< <xi^4>
    double K = 0.0;            ///< int G^2 rho~ dxi
    double C_G = 0.0;          ///< int xi [m G G' + (hbar/2) G''] rho~ dxi
    double K_unweighted = 0.0; ///< int G^2 dxi over the support window (diagnostic)
};

inline constexpr double kProfileQuadStep = 0.02;

/// One generalized coherent-state family: rho~(xi) normalized to unit
/// mass, zero mean and unit variance, with precomputed moments.
class StateProfile {
public:
    StateProfile(std::shared_ptr<const ProfileShape> shape, PhysConstants constants);

    static StateProfile gaussian(const PhysConstants& constants = {});
    /// rho~ proportional to sech^2(a xi) with a = pi / sqrt(12) (unit variance).
    static StateProfile sech2(const PhysConstants& constants = {});
    /// "gaussian" or "sech2".
    static StateProfile named(const std::string& name, const PhysConstants& constants = {});

    /// Tabulated samples on a uniform xi grid. The samples are standardized
    /// to unit mass, zero mean and unit variance. `G` holds the shape
    /// function at the same points (hbar/2m d ln rho~ / dxi).
    static StateProfile from_uniform_samples(double xi0, double step, std::vector<double> log_rho,
                                             std::vector<double> G, const PhysConstants& constants,
                                             std::string name);
    /// Tabulated (xi, rho~) pairs on an arbitrary increasing grid; cubic-spline
    /// interpolated in ln rho~.
    static StateProfile from_table(std::span<const double> xi, std::span<const double> rho,
                                   const PhysConstants& constants, std::string name = "table");

    double density(double xi) const;
    double log_density(double xi) const { return shape_->log_density(xi); }
    double G(double xi) const { return shape_->G(xi); }
    double dG(double xi) const { return shape_->dG(xi); }
    double d2G(double xi) const { return shape_->d2G(xi); }
    double support_halfwidth() const { return shape_->support_halfwidth(); }
    std::string name() const { return shape_->name(); }

    const ProfileMoments& moments() const { return moments_; }
    double K() const { return moments_.K; }
    double C_G() const { return moments_.C_G; }
    double G0() const { return G0_; }
    double G0p() const { return G0p_; }
    double G0pp() const { return G0pp_; }
    const PhysConstants& constants() const { return constants_; }

    /// Inverse CDF of rho~.
    double quantile(double p) const;

    /// Moments by uniform-step quadrature; used at construction and as an
    /// independent check at other resolutions.
    ProfileMoments measure(double step) const;

private:
    std::shared_ptr<const ProfileShape> shape_;
    PhysConstants constants_;
    ProfileMoments moments_;
    double G0_ = 0.0;
    double G0p_ = 0.0;
    double G0pp_ = 0.0;
    double cdf_lo_ = 0.0;
    double cdf_step_ = 0.0;
    std::vector<double> cdf_;
};

/// Reads a two-column CSV (xi, rho) with optional header and '#' comments.
StateProfile load_profile_csv(const std::string& path, const PhysConstants& constants);

} // namespace squeezelab
