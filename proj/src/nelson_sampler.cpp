#include "squeezelab/nelson_sampler.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/io.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <thread>

namespace squeezelab {

// --- random source ----------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    return splitmix(splitmix(splitmix(seed) ^ path) ^ step);
}

// Wichura's AS241 (PPND16): inverse normal CDF, relative accuracy ~1e-16.
// Used instead of a library quantile because the sampler draws ~1e9 variates.
double inverse_normal(double p) {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -val : val;
}

} // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    // 53 random bits, shifted off zero
    return (static_cast<double>(counter_bits(seed, path, step) >> 11) + 0.5) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    return inverse_normal(counter_uniform(seed, path, step));
}

// --- configuration ----------------------------------------------------------

void EnsembleConfig::validate() const {
    if (n_paths < kMinPaths) {
        std::ostringstream msg;
        msg << "ensemble needs at least " << kMinPaths << " paths (got " << n_paths << ")";
        throw ValidationError(msg.str());
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("sampler step must be positive");
    if (!std::isfinite(t_begin) || !std::isfinite(t_end) || t_end < t_begin)
        throw ValidationError("sampler span must be finite and forward");
    if (output_stride == 0) throw ValidationError("output stride must be at least 1");
    if (!(xi_max > 0.0)) throw ValidationError("xi_max must be positive");
}

std::size_t EnsembleConfig::steps() const { return static_cast<std::size_t>(std::llround((t_end - t_begin) / dt)); }

double PathEnsemble::diffusion_estimate() const {
    if (noise_count == 0) return 0.0;
    return noise_sq_sum / static_cast<double>(noise_count) / dt;
}

// --- path integration -------------------------------------------------------

namespace {

std::vector<std::size_t> output_steps(std::size_t steps, std::size_t stride) {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s <= steps; s += stride) out.push_back(s);
    if (out.back() != steps) out.push_back(steps);
    return out;
}

// Runs paths [begin, end) through `step_fn(path, x, step) -> drift` with
// exclusion predicate `escaped(x, step)`.
template <class Drift, class Escaped>
void run_paths(PathEnsemble& e, const EnsembleConfig& cfg, std::span<const double> initial,
               const std::vector<std::size_t>& outs, double noise_scale, Drift&& drift, Escaped&& escaped,
               std::vector<double>& noise_sums, std::vector<std::size_t>& noise_counts) {
    const std::size_t steps = cfg.steps();
    const std::size_t n = cfg.n_paths;
    const double sdt = noise_scale * std::sqrt(cfg.dt);
    unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double x = initial[i];
            double prev = x;
            double sum = 0.0;
            std::size_t count = 0;
            std::size_t next_out = 0;
            bool out_flag = false;
            for (std::size_t s = 0;; ++s) {
                if (next_out < outs.size() && outs[next_out] == s) {
                    e.positions[next_out * n + i] = x;
                    e.previous[next_out * n + i] = s == 0 ? x : prev;
                    ++next_out;
                }
                if (s == steps) break;
                if (out_flag) continue;
                const double noise = sdt * counter_normal(cfg.seed, i, s);
                prev = x;
                x += drift(x, s) * cfg.dt + noise;
                sum += noise * noise;
                ++count;
                if (escaped(x, s + 1)) {
                    out_flag = true;
                    e.excluded[i] = 1;
                }
            }
            noise_sums[i] = sum;
            noise_counts[i] = count;
        }
    };

    if (workers <= 1) {
        work(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t en = std::min(n, b + chunk);
        if (b >= en) break;
        pool.emplace_back(work, b, en);
    }
    for (auto& t : pool) t.join();
}

PathEnsemble make_ensemble(const EnsembleConfig& cfg, const std::vector<std::size_t>& outs) {
    PathEnsemble e;
    e.n_paths = cfg.n_paths;
    e.dt = cfg.dt;
    for (auto s : outs) e.times.push_back(cfg.t_begin + cfg.dt * static_cast<double>(s));
    e.positions.assign(outs.size() * cfg.n_paths, 0.0);
    e.previous.assign(outs.size() * cfg.n_paths, 0.0);
    e.excluded.assign(cfg.n_paths, 0);
    return e;
}

void finish(PathEnsemble& e, const std::vector<double>& sums, const std::vector<std::size_t>& counts) {
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < e.n_paths; ++i) {
        if (e.excluded[i]) {
            ++excluded;
            continue;
        }
        e.noise_sq_sum += sums[i];
        e.noise_count += counts[i];
    }
    e.excluded_fraction = static_cast<double>(excluded) / static_cast<double>(e.n_paths);
}

} // namespace

PathEnsemble sample_paths(const EnsembleConfig& cfg, std::span<const double> initial, const DriftFn& drift,
                          double noise_scale) {
    cfg.validate();
    if (initial.size() != cfg.n_paths) throw ValidationError("need one initial position per path");
    if (!(noise_scale >= 0.0)) throw ValidationError("noise scale must be non-negative");
    const auto outs = output_steps(cfg.steps(), cfg.output_stride);
    auto e = make_ensemble(cfg, outs);
    std::vector<double> sums(cfg.n_paths);
    std::vector<std::size_t> counts(cfg.n_paths);
    run_paths(
        e, cfg, initial, outs, noise_scale,
        [&](double x, std::size_t s) { return drift(x, cfg.t_begin + cfg.dt * static_cast<double>(s)); },
        [](double x, std::size_t) { return !std::isfinite(x); }, sums, counts);
    finish(e, sums, counts);
    return e;
}

PathEnsemble sample_forward(const StateProfile& profile, const TrajectoryRecord& record, const EnsembleConfig& cfg) {
    cfg.validate();
    const auto& c = profile.constants();
    const std::size_t steps = cfg.steps();

    struct StepState {
        double q, v, dq, rate;
    };
    std::vector<StepState> path_of(steps + 1);
    for (std::size_t s = 0; s <= steps; ++s) {
        const auto st = record.at(cfg.t_begin + cfg.dt * static_cast<double>(s));
        path_of[s] = {st.q_mean, st.v_mean, st.dq, st.dq_dot};
    }

    std::vector<double> initial(cfg.n_paths);
    for (std::size_t i = 0; i < cfg.n_paths; ++i) {
        // step index 2^64-1 is reserved for the initial draw
        const double xi = profile.quantile(counter_uniform(cfg.seed, i, ~std::uint64_t{0}));
        initial[i] = path_of[0].q + path_of[0].dq * xi;
    }

    const auto outs = output_steps(steps, cfg.output_stride);
    auto e = make_ensemble(cfg, outs);
    std::vector<double> sums(cfg.n_paths);
    std::vector<std::size_t> counts(cfg.n_paths);
    const double xi_max = cfg.xi_max;
    run_paths(
        e, cfg, initial, outs, std::sqrt(c.hbar / c.mass),
        [&](double x, std::size_t s) {
            const auto& st = path_of[s];
            const double xi = (x - st.q) / st.dq;
            return st.v + xi * st.rate + profile.G(xi) / st.dq;
        },
        [&](double x, std::size_t s) {
            const auto& st = path_of[s];
            return !(std::abs((x - st.q) / st.dq) <= xi_max);
        },
        sums, counts);
    finish(e, sums, counts);
    if (e.excluded_fraction > kMaxExcludedFraction) {
        std::ostringstream msg;
        msg << "excluded " << 100.0 * e.excluded_fraction << "% of paths beyond |xi| = " << xi_max
            << " (limit 1%)";
        throw NumericalError(msg.str());
    }
    return e;
}

// --- statistics -------------------------------------------------------------

SampleMoments moments(const PathEnsemble& e, std::size_t output) {
    const auto x = e.at(output);
    SampleMoments m;
    double sum = 0.0;
    for (std::size_t i = 0; i < e.n_paths; ++i) {
        if (e.excluded[i]) continue;
        sum += x[i];
        ++m.count;
    }
    if (m.count < 2) throw NumericalError("too few included paths for moments");
    m.mean = sum / static_cast<double>(m.count);
    double m2 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < e.n_paths; ++i) {
        if (e.excluded[i]) continue;
        const double d = x[i] - m.mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    const double nn = static_cast<double>(m.count);
    m.std = std::sqrt(m2 / (nn - 1.0));
    m.kurtosis = (m4 / nn) / ((m2 / nn) * (m2 / nn));
    return m;
}

BackwardReport backward_consistency(const PathEnsemble& e, const DriftFn& v_minus, std::size_t bins) {
    if (bins < 2) throw ValidationError("need at least two bins");
    BackwardReport rep;
    for (std::size_t k = 1; k < e.outputs(); ++k) {
        const double t = e.times[k];
        const auto x = e.at(k);
        const auto xp = e.before(k);
        const auto mom = moments(e, k);
        const double lo = mom.mean - 4.0 * mom.std;
        const double width = 8.0 * mom.std / static_cast<double>(bins);
        std::vector<double> n(bins, 0.0), inc(bins, 0.0), inc2(bins, 0.0), model(bins, 0.0);
        for (std::size_t i = 0; i < e.n_paths; ++i) {
            if (e.excluded[i]) continue;
            const double pos = (x[i] - lo) / width;
            if (pos < 0.0 || pos >= static_cast<double>(bins)) continue;
            const auto b = static_cast<std::size_t>(pos);
            const double r = (x[i] - xp[i]) / e.dt;
            n[b] += 1.0;
            inc[b] += r;
            inc2[b] += r * r;
            model[b] += v_minus(x[i], t);
        }
        for (std::size_t b = 0; b < bins; ++b) {
            if (n[b] < static_cast<double>(kMinBinCount)) {
                ++rep.bins_skipped;
                continue;
            }
            const double mean = inc[b] / n[b];
            const double var = std::max(0.0, inc2[b] / n[b] - mean * mean) * n[b] / (n[b] - 1.0);
            const double band = std::sqrt(var / n[b]);
            const double diff = std::abs(mean - model[b] / n[b]);
            const double z = band > 0.0 ? diff / band : (diff > 1e-9 ? INFINITY : 0.0);
            rep.max_z = std::max(rep.max_z, z);
            ++rep.bins_used;
        }
    }
    return rep;
}

BackwardReport backward_consistency(const PathEnsemble& e, const StateProfile& profile,
                                    const TrajectoryRecord& record, std::size_t bins) {
    return backward_consistency(
        e,
        [&](double x, double t) {
            const auto s = record.at(t);
            const double xi = (x - s.q_mean) / s.dq;
            return s.v_mean + xi * s.dq_dot - profile.G(xi) / s.dq;
        },
        bins);
}

bool OsmoticReport::chain_holds(double tol) const {
    return quantum + tol >= exact && exact + tol >= bound;
}

OsmoticReport osmotic_uncertainty(const StateProfile& profile, const TrajectoryState& traj) {
    const auto& c = profile.constants();
    OsmoticReport r;
    r.exact = c.mass * std::sqrt(profile.K());
    r.bound = 0.5 * c.hbar;
    const double L = c.mass * traj.dq * traj.dq_dot;
    r.quantum = std::sqrt(c.mass * c.mass * profile.K() + L * L);
    r.empirical = r.exact;
    return r;
}

OsmoticReport osmotic_uncertainty(const PathEnsemble& e, std::size_t output, const StateProfile& profile,
                                  const TrajectoryRecord& record) {
    const auto s = record.at(e.times.at(output));
    auto r = osmotic_uncertainty(profile, s);
    const auto x = e.at(output);
    std::vector<double> u;
    u.reserve(e.n_paths);
    for (std::size_t i = 0; i < e.n_paths; ++i)
        if (!e.excluded[i]) u.push_back(profile.G((x[i] - s.q_mean) / s.dq) / s.dq);
    const double nn = static_cast<double>(u.size());
    double mu = 0.0;
    for (double v : u) mu += v;
    mu /= nn;
    double m2 = 0.0, m4 = 0.0;
    for (double v : u) {
        m2 += (v - mu) * (v - mu);
        m4 += std::pow(v - mu, 4);
    }
    const double su = std::sqrt(m2 / (nn - 1.0));
    const double ku = (m4 / nn) / ((m2 / nn) * (m2 / nn));
    const auto mq = moments(e, output);
    r.empirical = profile.constants().mass * mq.std * su;
    // relative CLT errors of the two standard deviations, added conservatively
    const double rel = std::sqrt(std::max(0.0, mq.kurtosis - 1.0) / (4.0 * nn)) +
                       std::sqrt(std::max(0.0, ku - 1.0) / (4.0 * nn));
    r.band = 4.0 * r.empirical * rel;
    return r;
}

ChiSquaredReport density_chi_squared(const PathEnsemble& e, std::size_t output, const StateProfile& profile,
                                     const TrajectoryRecord& record, std::size_t bins) {
    if (bins < 2) throw ValidationError("need at least two bins");
    const auto s = record.at(e.times.at(output));
    std::vector<double> edges(bins - 1);
    for (std::size_t b = 1; b < bins; ++b)
        edges[b - 1] = profile.quantile(static_cast<double>(b) / static_cast<double>(bins));
    std::vector<double> counts(bins, 0.0);
    const auto x = e.at(output);
    double total = 0.0;
    for (std::size_t i = 0; i < e.n_paths; ++i) {
        if (e.excluded[i]) continue;
        const double xi = (x[i] - s.q_mean) / s.dq;
        const auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), xi) - edges.begin());
        counts[b] += 1.0;
        total += 1.0;
    }
    const double expected = total / static_cast<double>(bins);
    ChiSquaredReport rep;
    for (double c : counts) rep.statistic += (c - expected) * (c - expected) / expected;
    rep.dof = bins - 1;
    const boost::math::chi_squared dist(static_cast<double>(rep.dof));
    rep.p_value = boost::math::cdf(boost::math::complement(dist, rep.statistic));
    return rep;
}

void write_ensemble_csv(const PathEnsemble& e, const TrajectoryRecord& record, std::ostream& out) {
    out << kSchemaLine << "\n";
    out << "t,empirical_mean,empirical_std,model_mean,model_std,excluded_fraction\n";
    for (std::size_t k = 0; k < e.outputs(); ++k) {
        const auto m = moments(e, k);
        const auto s = record.at(e.times[k]);
        out << fmt_num(e.times[k]) << ',' << fmt_num(m.mean) << ',' << fmt_num(m.std) << ',' << fmt_num(s.q_mean)
            << ',' << fmt_num(s.dq) << ',' << fmt_num(e.excluded_fraction) << '\n';
    }
}

} // namespace squeezelab
