#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace squeezelab {

using cplx = std::complex<double>;
using RealField = std::vector<double>;
using ComplexField = std::vector<cplx>;

/// Physical constants. Natural units (hbar = mass = 1) by default.
struct PhysConstants {
    double hbar = 1.0;
    double mass = 1.0;

    void validate() const;
    /// Nelson diffusion coefficient hbar / 2m.
    double diffusion() const { return hbar / (2.0 * mass); }
};

/// Uniform periodic-compatible grid x_j = x_min + j*dx, j = 0..n-1,
/// dx = (x_max - x_min) / n. The point x_max itself is not sampled.
class Grid1D {
public:
    Grid1D(double x_min, double x_max, std::size_t n_points);

    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    std::size_t size() const { return n_; }
    double dx() const { return dx_; }
    double length() const { return x_max_ - x_min_; }

    double x(std::size_t j) const { return x_min_ + static_cast<double>(j) * dx_; }
    RealField coordinates() const;
    /// Angular wavenumbers in FFT ordering.
    RealField wavenumbers() const;
    /// Index of the grid point closest to position, clamped to the grid.
    std::size_t nearest_index(double position) const;

    bool operator==(const Grid1D& other) const = default;

private:
    double x_min_;
    double x_max_;
    std::size_t n_;
    double dx_;
};

/// Default box [-20, 20] with 1024 points.
Grid1D default_grid();

// Spectral (Fourier) derivatives. order must be 1 or 2.
ComplexField derivative(const Grid1D& grid, std::span<const cplx> field, int order);
RealField derivative(const Grid1D& grid, std::span<const double> field, int order);

// Rectangle rule, which is the trapezoidal rule for periodic data.
double quadrature(const Grid1D& grid, std::span<const double> field);
cplx quadrature(const Grid1D& grid, std::span<const cplx> field);

/// Forward DFT (unnormalized) and its exact inverse (carries the 1/n), FFTW backed.
ComplexField fft_forward(std::span<const cplx> field);
ComplexField fft_inverse(std::span<const cplx> spectrum);
/// Allocation-free variants; `out` must not alias the input.
void fft_forward(std::span<const cplx> field, std::span<cplx> out);
void fft_inverse(std::span<const cplx> spectrum, std::span<cplx> out);

} // namespace squeezelab
