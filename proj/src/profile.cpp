#include "squeezelab/profile.hpp"

#include "squeezelab/errors.hpp"

#include <boost/math/interpolators/cardinal_quintic_b_spline.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace squeezelab {

namespace {

using boost::math::interpolators::cardinal_quintic_b_spline;

constexpr double kNegligibleLogDensity = -69.0; // rho~ ~ 1e-30
constexpr double kCdfStep = 1e-3;
constexpr double kMomentTol = 1e-8;

double log_cosh(double y) {
    const double a = std::abs(y);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

class GaussianShape final : public ProfileShape {
public:
    explicit GaussianShape(const PhysConstants& c) : c_(c.hbar / (2.0 * c.mass)) {}
    double log_density(double xi) const override { return -0.5 * xi * xi - 0.5 * std::log(2.0 * std::numbers::pi); }
    double G(double xi) const override { return -c_ * xi; }
    double dG(double) const override { return -c_; }
    double d2G(double) const override { return 0.0; }
    double support_halfwidth() const override { return 12.0; }
    std::string name() const override { return "gaussian"; }

private:
    double c_;
};

class Sech2Shape final : public ProfileShape {
public:
    explicit Sech2Shape(const PhysConstants& c) : scale_(c.hbar / c.mass * kA) {}
    double log_density(double xi) const override { return std::log(0.5 * kA) - 2.0 * log_cosh(kA * xi); }
    double G(double xi) const override { return -scale_ * std::tanh(kA * xi); }
    double dG(double xi) const override {
        const double s = 1.0 / std::cosh(kA * xi);
        return -scale_ * kA * s * s;
    }
    double d2G(double xi) const override {
        const double s = 1.0 / std::cosh(kA * xi);
        return 2.0 * scale_ * kA * kA * s * s * std::tanh(kA * xi);
    }
    double support_halfwidth() const override { return 40.0; }
    std::string name() const override { return "sech2"; }

    static constexpr double kA = std::numbers::pi / 3.4641016151377544; // pi / sqrt(12)

private:
    double scale_;
};

/// Quintic B-spline tables of ln rho~ and G over [lo, hi]; outside, G is
/// continued linearly with its edge slope and ln rho~ by integrating it.
class TabulatedShape final : public ProfileShape {
public:
    TabulatedShape(double xi0, double step, std::vector<double> log_rho, std::vector<double> g,
                   const PhysConstants& c, std::string name)
        : lo_(xi0), hi_(xi0 + step * static_cast<double>(log_rho.size() - 1)), inv_c_(2.0 * c.mass / c.hbar),
          log_rho_(log_rho, xi0, step), g_(g, xi0, step), name_(std::move(name)) {
        edge_lo_ = Edge{lo_, log_rho_(lo_), g_(lo_), g_.prime(lo_)};
        edge_hi_ = Edge{hi_, log_rho_(hi_), g_(hi_), g_.prime(hi_)};
        // Linear continuation must not reverse the decay; fall back to constant G.
        if (edge_lo_.slope > 0.0) edge_lo_.slope = 0.0;
        if (edge_hi_.slope > 0.0) edge_hi_.slope = 0.0;
        halfwidth_ = std::max(std::abs(lo_), std::abs(hi_));
        for (double w = halfwidth_; w < 1e3; w += 0.5) {
            halfwidth_ = w;
            if (log_density(w) < kNegligibleLogDensity && log_density(-w) < kNegligibleLogDensity) break;
        }
    }

    double log_density(double xi) const override {
        if (xi < lo_) return continued_log(edge_lo_, xi);
        if (xi > hi_) return continued_log(edge_hi_, xi);
        return log_rho_(xi);
    }
    double G(double xi) const override {
        if (xi < lo_) return edge_lo_.g + edge_lo_.slope * (xi - lo_);
        if (xi > hi_) return edge_hi_.g + edge_hi_.slope * (xi - hi_);
        return g_(xi);
    }
    double dG(double xi) const override {
        if (xi < lo_) return edge_lo_.slope;
        if (xi > hi_) return edge_hi_.slope;
        return g_.prime(xi);
    }
    double d2G(double xi) const override {
        if (xi < lo_ || xi > hi_) return 0.0;
        return g_.double_prime(xi);
    }
    double support_halfwidth() const override { return halfwidth_; }
    std::string name() const override { return name_; }

private:
    struct Edge {
        double xi;
        double log_rho;
        double g;
        double slope;
    };

    double continued_log(const Edge& e, double xi) const {
        const double d = xi - e.xi;
        return e.log_rho + inv_c_ * (e.g * d + 0.5 * e.slope * d * d);
    }

    double lo_;
    double hi_;
    double inv_c_;
    cardinal_quintic_b_spline<double> log_rho_;
    cardinal_quintic_b_spline<double> g_;
    std::string name_;
    Edge edge_lo_{};
    Edge edge_hi_{};
    double halfwidth_ = 0.0;
};

/// rho'(xi') = scale * rho(shift + scale * xi') / mass.
class AffineShape final : public ProfileShape {
public:
    AffineShape(std::shared_ptr<const ProfileShape> inner, double shift, double scale, double mass)
        : inner_(std::move(inner)), shift_(shift), scale_(scale), log_norm_(std::log(scale / mass)) {}
    double log_density(double xi) const override { return inner_->log_density(map(xi)) + log_norm_; }
    double G(double xi) const override { return scale_ * inner_->G(map(xi)); }
    double dG(double xi) const override { return scale_ * scale_ * inner_->dG(map(xi)); }
    double d2G(double xi) const override { return scale_ * scale_ * scale_ * inner_->d2G(map(xi)); }
    double support_halfwidth() const override { return (inner_->support_halfwidth() + std::abs(shift_)) / scale_; }
    std::string name() const override { return inner_->name(); }

private:
    double map(double xi) const { return shift_ + scale_ * xi; }
    std::shared_ptr<const ProfileShape> inner_;
    double shift_;
    double scale_;
    double log_norm_;
};

ProfileMoments measure_shape(const ProfileShape& shape, const PhysConstants& c, double step) {
    const double w = shape.support_halfwidth();
    const auto n = static_cast<long>(std::ceil(2.0 * w / step));
    const double h = 2.0 * w / static_cast<double>(n);
    ProfileMoments m;
    double s0 = 0, s1 = 0, s2 = 0, s4 = 0, sk = 0, sc = 0, sku = 0;
    for (long k = 0; k <= n; ++k) {
        const double xi = -w + h * static_cast<double>(k);
        const double wt = (k == 0 || k == n) ? 0.5 : 1.0;
        const double r = std::exp(shape.log_density(xi)) * wt;
        const double g = shape.G(xi);
        const double xi2 = xi * xi;
        s0 += r;
        s1 += xi * r;
        s2 += xi2 * r;
        s4 += xi2 * xi2 * r;
        sk += g * g * r;
        sc += xi * (c.mass * g * shape.dG(xi) + 0.5 * c.hbar * shape.d2G(xi)) * r;
        sku += g * g * wt;
    }
    m.mass = s0 * h;
    m.mean = s1 * h / m.mass;
    m.variance = s2 * h / m.mass - m.mean * m.mean;
    m.fourth = s4 * h;
    m.K = sk * h;
    m.C_G = sc * h;
    m.K_unweighted = sku * h;
    return m;
}

std::shared_ptr<const ProfileShape> standardize(std::shared_ptr<const ProfileShape> shape, const PhysConstants& c) {
    const auto m = measure_shape(*shape, c, kProfileQuadStep);
    if (!(m.mass > 0.0) || !(m.variance > 0.0))
        throw ValidationError("profile density has no mass or zero variance");
    return std::make_shared<AffineShape>(std::move(shape), m.mean, std::sqrt(m.variance), m.mass);
}

// Natural cubic spline on an increasing, possibly non-uniform grid.
class NaturalCubicSpline {
public:
    NaturalCubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        std::vector<double> diag(n, 2.0), rhs(n, 0.0), sub(n, 0.0), sup(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            sub[i] = h0 / (h0 + h1);
            sup[i] = h1 / (h0 + h1);
            rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0) / (h0 + h1);
        }
        // Thomas algorithm with m_0 = m_{n-1} = 0.
        sup[0] = 0.0;
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        sub[n - 1] = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            const double w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        m_[n - 1] = rhs[n - 1] / diag[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) m_[i] = (rhs[i] - sup[i] * m_[i + 1]) / diag[i];
    }

    double value(double t) const { return eval(t, false); }
    double prime(double t) const { return eval(t, true); }

private:
    double eval(double t, bool deriv) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), t);
        std::size_t i = (it == x_.begin()) ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        i = std::min(i, x_.size() - 2);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - t) / h;
        const double b = (t - x_[i]) / h;
        if (!deriv)
            return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
        return (y_[i + 1] - y_[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m_[i] + (3.0 * b * b - 1.0) / 6.0 * h * m_[i + 1];
    }

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
};

} // namespace

StateProfile::StateProfile(std::shared_ptr<const ProfileShape> shape, PhysConstants constants)
    : shape_(std::move(shape)), constants_(constants) {
    constants_.validate();
    if (!shape_) throw ValidationError("profile shape is null");
    moments_ = measure(kProfileQuadStep);
    if (std::abs(moments_.mass - 1.0) > kMomentTol || std::abs(moments_.mean) > kMomentTol ||
        std::abs(moments_.variance - 1.0) > kMomentTol) {
        std::ostringstream msg;
        msg << "profile '" << shape_->name() << "' is not standardized: mass=" << moments_.mass
            << " mean=" << moments_.mean << " variance=" << moments_.variance;
        throw ValidationError(msg.str());
    }
    if (!(moments_.K > 0.0)) throw ValidationError("profile osmotic moment K must be positive");
    G0_ = shape_->G(0.0);
    G0p_ = shape_->dG(0.0);
    G0pp_ = shape_->d2G(0.0);

    const double w = shape_->support_halfwidth();
    const auto n = static_cast<std::size_t>(std::ceil(2.0 * w / kCdfStep));
    cdf_step_ = 2.0 * w / static_cast<double>(n);
    cdf_lo_ = -w;
    cdf_.assign(n + 1, 0.0);
    double prev = density(cdf_lo_);
    for (std::size_t k = 1; k <= n; ++k) {
        const double cur = density(cdf_lo_ + cdf_step_ * static_cast<double>(k));
        cdf_[k] = cdf_[k - 1] + 0.5 * (prev + cur) * cdf_step_;
        prev = cur;
    }
    const double total = cdf_.back();
    for (auto& c : cdf_) c /= total;
}

StateProfile StateProfile::gaussian(const PhysConstants& constants) {
    return StateProfile(std::make_shared<GaussianShape>(constants), constants);
}

StateProfile StateProfile::sech2(const PhysConstants& constants) {
    return StateProfile(std::make_shared<Sech2Shape>(constants), constants);
}

StateProfile StateProfile::named(const std::string& name, const PhysConstants& constants) {
    if (name == "gaussian") return gaussian(constants);
    if (name == "sech2") return sech2(constants);
    throw ValidationError("unknown profile '" + name + "' (expected gaussian or sech2)");
}

StateProfile StateProfile::from_uniform_samples(double xi0, double step, std::vector<double> log_rho,
                                                std::vector<double> G, const PhysConstants& constants,
                                                std::string name) {
    constants.validate();
    if (log_rho.size() != G.size() || log_rho.size() < 16)
        throw ValidationError("tabulated profile needs at least 16 matching samples");
    if (!(step > 0.0)) throw ValidationError("tabulated profile step must be positive");
    for (std::size_t i = 0; i < log_rho.size(); ++i)
        if (!std::isfinite(log_rho[i]) || !std::isfinite(G[i]))
            throw ValidationError("tabulated profile contains non-finite samples");
    auto raw = std::make_shared<TabulatedShape>(xi0, step, std::move(log_rho), std::move(G), constants, std::move(name));
    return StateProfile(standardize(std::move(raw), constants), constants);
}

StateProfile StateProfile::from_table(std::span<const double> xi, std::span<const double> rho,
                                      const PhysConstants& constants, std::string name) {
    if (xi.size() != rho.size() || xi.size() < 8)
        throw ValidationError("profile table needs at least 8 (xi, rho) pairs");
    std::vector<double> xs(xi.begin(), xi.end());
    std::vector<double> lr(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (i > 0 && !(xs[i] > xs[i - 1])) throw ValidationError("profile table xi must be strictly increasing");
        if (!(rho[i] > 0.0) || !std::isfinite(rho[i]))
            throw ValidationError("profile table densities must be finite and positive");
        lr[i] = std::log(rho[i]);
    }
    NaturalCubicSpline spline(xs, lr);
    const double lo = xs.front();
    const double hi = xs.back();
    const std::size_t n = std::max<std::size_t>(2001, 8 * xs.size());
    const double step = (hi - lo) / static_cast<double>(n - 1);
    const double c = constants.hbar / (2.0 * constants.mass);
    std::vector<double> log_rho(n), g(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = lo + step * static_cast<double>(k);
        log_rho[k] = spline.value(t);
        g[k] = c * spline.prime(t);
    }
    return from_uniform_samples(lo, step, std::move(log_rho), std::move(g), constants, std::move(name));
}

double StateProfile::density(double xi) const { return std::exp(shape_->log_density(xi)); }

double StateProfile::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile requires 0 < p < 1");
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
    if (it == cdf_.begin()) return cdf_lo_;
    if (it == cdf_.end()) return cdf_lo_ + cdf_step_ * static_cast<double>(cdf_.size() - 1);
    const auto k = static_cast<std::size_t>(it - cdf_.begin());
    const double c0 = cdf_[k - 1];
    const double c1 = cdf_[k];
    const double frac = (c1 > c0) ? (p - c0) / (c1 - c0) : 0.5;
    return cdf_lo_ + cdf_step_ * (static_cast<double>(k - 1) + frac);
}

ProfileMoments StateProfile::measure(double step) const { return measure_shape(*shape_, constants_, step); }

StateProfile load_profile_csv(const std::string& path, const PhysConstants& constants) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open profile table '" + path + "'");
    std::vector<double> xi, rho;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double a = 0.0, b = 0.0;
        if (!(ss >> a >> b)) {
            if (xi.empty()) continue; // header row
            throw ValidationError("malformed row in profile table '" + path + "': " + line);
        }
        xi.push_back(a);
        rho.push_back(b);
    }
    return StateProfile::from_table(xi, rho, constants, path);
}

} // namespace squeezelab
