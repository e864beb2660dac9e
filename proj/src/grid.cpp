#include "squeezelab/grid.hpp"

#include "squeezelab/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

namespace squeezelab {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

const Plans& plans_for(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<Plans>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<Plans>();
        std::vector<cplx> in(n), out(n);
        auto* pin = reinterpret_cast<fftw_complex*>(in.data());
        auto* pout = reinterpret_cast<fftw_complex*>(out.data());
        const int len = static_cast<int>(n);
        slot->forward = fftw_plan_dft_1d(len, pin, pout, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        slot->backward = fftw_plan_dft_1d(len, pin, pout, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    return *slot;
}

void execute(fftw_plan plan, std::span<const cplx> in, std::span<cplx> out) {
    // FFTW's signature takes a non-const input; out-of-place plans do not write it.
    auto* pin = reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data()));
    fftw_execute_dft(plan, pin, reinterpret_cast<fftw_complex*>(out.data()));
}

} // namespace

void PhysConstants::validate() const {
    if (!(hbar > 0.0) || !std::isfinite(hbar))
        throw ValidationError("hbar must be finite and strictly positive");
    if (!(mass > 0.0) || !std::isfinite(mass))
        throw ValidationError("mass must be finite and strictly positive");
}

Grid1D::Grid1D(double x_min, double x_max, std::size_t n_points)
    : x_min_(x_min), x_max_(x_max), n_(n_points), dx_(0.0) {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_max > x_min))
        throw ValidationError("grid requires finite x_min < x_max");
    if (n_points < 16 || (n_points & (n_points - 1)) != 0)
        throw ValidationError("grid size must be a power of two and at least 16, got " +
                              std::to_string(n_points));
    dx_ = (x_max - x_min) / static_cast<double>(n_points);
}

RealField Grid1D::coordinates() const {
    RealField xs(n_);
    for (std::size_t j = 0; j < n_; ++j) xs[j] = x(j);
    return xs;
}

RealField Grid1D::wavenumbers() const {
    RealField k(n_);
    const double base = 2.0 * std::numbers::pi / length();
    const auto half = static_cast<long>(n_ / 2);
    for (std::size_t j = 0; j < n_; ++j) {
        long m = static_cast<long>(j);
        if (m >= half) m -= static_cast<long>(n_);
        k[j] = base * static_cast<double>(m);
    }
    return k;
}

std::size_t Grid1D::nearest_index(double position) const {
    const double s = std::round((position - x_min_) / dx_);
    if (s <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(s), n_ - 1);
}

Grid1D default_grid() { return Grid1D(-20.0, 20.0, 1024); }

void fft_forward(std::span<const cplx> field, std::span<cplx> out) {
    if (out.size() != field.size() || out.data() == field.data())
        throw ValidationError("fft output must be a distinct buffer of the same length");
    execute(plans_for(field.size()).forward, field, out);
}

void fft_inverse(std::span<const cplx> spectrum, std::span<cplx> out) {
    if (out.size() != spectrum.size() || out.data() == spectrum.data())
        throw ValidationError("fft output must be a distinct buffer of the same length");
    execute(plans_for(spectrum.size()).backward, spectrum, out);
    const double scale = 1.0 / static_cast<double>(spectrum.size());
    for (auto& z : out) z *= scale;
}

ComplexField fft_forward(std::span<const cplx> field) {
    ComplexField out(field.size());
    execute(plans_for(field.size()).forward, field, out);
    return out;
}

ComplexField fft_inverse(std::span<const cplx> spectrum) {
    ComplexField out(spectrum.size());
    execute(plans_for(spectrum.size()).backward, spectrum, out);
    const double scale = 1.0 / static_cast<double>(spectrum.size());
    for (auto& z : out) z *= scale;
    return out;
}

ComplexField derivative(const Grid1D& grid, std::span<const cplx> field, int order) {
    if (order != 1 && order != 2)
        throw ValidationError("derivative order must be 1 or 2, got " + std::to_string(order));
    if (field.size() != grid.size())
        throw ValidationError("field length does not match grid");
    auto spec = fft_forward(field);
    const auto k = grid.wavenumbers();
    const std::size_t nyquist = grid.size() / 2;
    for (std::size_t j = 0; j < spec.size(); ++j) {
        if (order == 1)
            spec[j] *= (j == nyquist) ? cplx(0.0) : cplx(0.0, k[j]);
        else
            spec[j] *= -k[j] * k[j];
    }
    return fft_inverse(spec);
}

RealField derivative(const Grid1D& grid, std::span<const double> field, int order) {
    ComplexField z(field.begin(), field.end());
    const auto dz = derivative(grid, std::span<const cplx>(z), order);
    RealField out(dz.size());
    std::transform(dz.begin(), dz.end(), out.begin(), [](cplx c) { return c.real(); });
    return out;
}

double quadrature(const Grid1D& grid, std::span<const double> field) {
    if (field.size() != grid.size())
        throw ValidationError("field length does not match grid");
    double sum = 0.0;
    for (double v : field) sum += v;
    return sum * grid.dx();
}

cplx quadrature(const Grid1D& grid, std::span<const cplx> field) {
    if (field.size() != grid.size())
        throw ValidationError("field length does not match grid");
    cplx sum = 0.0;
    for (cplx v : field) sum += v;
    return sum * grid.dx();
}

} // namespace squeezelab
