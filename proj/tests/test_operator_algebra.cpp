#include "fixtures.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/operator_algebra.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace squeezelab;

namespace {

const PhysConstants kUnits;
const double kDq0 = fixtures::ground_dispersion(1.0);
const Grid1D kDense(-18.0, 18.0, 512);

TrajectoryState traj(double q, double v, double dq, double dq_dot, double s0 = 0.0) {
    TrajectoryState s;
    s.q_mean = q;
    s.v_mean = v;
    s.dq = dq;
    s.dq_dot = dq_dot;
    s.S0 = s0;
    return s;
}

WaveFunction profile_state(const StateProfile& p, const Grid1D& grid, double dq) {
    return assemble_state(p, traj(0, 0, dq, 0), grid, kUnits);
}

double max_modulus_diff(const WaveFunction& a, std::span<const cplx> b) {
    double worst = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) worst = std::max(worst, std::abs(std::abs(a.psi()[j]) - std::abs(b[j])));
    return worst;
}

} // namespace

TEST_CASE("squeeze parameters") {
    const auto p = SqueezeParams::from_dispersion(kDq0, 2 * kDq0, 0.0);
    CHECK(p.f == doctest::Approx(-0.5 * std::log(2.0)).epsilon(1e-14));
    CHECK(p.f == doctest::Approx(-0.34657).epsilon(1e-5));
    CHECK(p.g == 0.0);

    const auto q = SqueezeParams::from_dispersion(kDq0, 0.7, 0.3);
    CHECK(q.g == doctest::Approx(0.3 / 0.7 / (1 - 2 * q.f)).epsilon(1e-14));

    const auto r = SqueezeParams::from_fg(0.4, 0.1, kDq0);
    const auto back = SqueezeParams::from_dispersion(kDq0, r.dq, r.dq_dot);
    CHECK(back.f == doctest::Approx(0.4).epsilon(1e-13));
    CHECK(back.g == doctest::Approx(0.1).epsilon(1e-12));

    // 1 - 2f = 0 at dq = dq0 / e
    CHECK_THROWS_AS(SqueezeParams::from_dispersion(1.0, std::exp(-1.0), 0.2), ValidationError);
    CHECK(SqueezeParams::from_dispersion(1.0, std::exp(-1.0), 0.0).g == 0.0);
    CHECK_THROWS_AS(SqueezeParams::from_dispersion(0.0, 1.0, 0.0), ValidationError);
    CHECK(parse_squeeze_coefficient("first-order") == SqueezeCoefficient::FirstOrder);
    CHECK_THROWS_AS(parse_squeeze_coefficient("printed"), ValidationError);
}

TEST_CASE("displacement") {
    const auto grid = default_grid();
    const auto ground = fixtures::gaussian(grid, kDq0);
    const auto g0 = observables(ground);

    SUBCASE("translation") {
        const auto o = observables(displace(ground, 1.0, 0.0));
        CHECK(o.q_mean == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(o.dq == doctest::Approx(g0.dq).epsilon(1e-12));
    }

    SUBCASE("boost") {
        const auto o = observables(displace(ground, 0.0, 0.7));
        CHECK(o.p_mean == doctest::Approx(g0.p_mean + 0.7).epsilon(1e-12));
        CHECK(o.dq == doctest::Approx(g0.dq).epsilon(1e-12));
        CHECK(o.dp == doctest::Approx(g0.dp).epsilon(1e-10));
    }

    SUBCASE("fractional-cell shift matches the analytic packet") {
        const auto moved = displace(ground, 0.123456, 0.0);
        const auto exact = fixtures::gaussian_samples(grid, kDq0, 0.123456);
        double worst = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) worst = std::max(worst, std::abs(moved.psi()[j] - exact[j]));
        CHECK(worst < 1e-12);
    }

    SUBCASE("composition up to a global phase, and unitarity") {
        const auto state = fixtures::gaussian(grid, 0.9, 0.3, 0.2, 0.1);
        const auto two = displace(displace(state, 1.3, 0.4, 0.2), -0.6, 0.9, 0.1);
        const auto one = displace(state, 0.7, 1.3, 0.0);
        const auto aligned = align_global_phase(one.psi(), two.psi());
        double worst = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) worst = std::max(worst, std::abs(aligned[j] - one.psi()[j]));
        CHECK(worst < 1e-9);
        CHECK(max_modulus_diff(one, two.psi()) < 1e-9);
        CHECK(two.norm_squared() == doctest::Approx(state.norm_squared()).epsilon(1e-10));
    }

    SUBCASE("packet pushed against the edge is rejected") {
        CHECK_THROWS_AS(displace(ground, 18.0, 0.0), ValidationError);
    }
}

TEST_CASE("closed-form squeeze") {
    const auto grid = default_grid();
    const auto ground = fixtures::gaussian(grid, kDq0);

    SUBCASE("identity") {
        const auto out = squeeze_closed_form(ground, SqueezeParams::from_dispersion(kDq0, kDq0, 0.0));
        for (std::size_t j = 0; j < grid.size(); ++j) CHECK(out.state.psi()[j] == ground.psi()[j]);
        CHECK(out.norm_before == doctest::Approx(1.0).epsilon(1e-14));
    }

    SUBCASE("dispersion doubling") {
        const auto out = squeeze_closed_form(ground, SqueezeParams::from_dispersion(kDq0, 2 * kDq0, 0.0));
        CHECK(observables(out.state).dq == doctest::Approx(2 * kDq0).epsilon(1e-6));
        CHECK(out.norm_before == doctest::Approx(1.0).epsilon(1e-10));
    }

    SUBCASE("chirped squeeze reaches the requested dispersion") {
        const auto params = SqueezeParams::from_dispersion(kDq0, 0.7, 0.3);
        for (auto mode : {SqueezeCoefficient::Exact, SqueezeCoefficient::FirstOrder}) {
            const auto out = squeeze_closed_form(ground, params, mode);
            CHECK(observables(out.state).dq == doctest::Approx(0.7).epsilon(1e-6));
            // the applied phase is what the fit sees
            CHECK(fit_quadratic_phase(out.state, 0.0).c == doctest::Approx(out.phase_coefficient).epsilon(1e-8));
        }
    }

    SUBCASE("e^f keeps non-Gaussian profiles normalized") {
        const auto sech = profile_state(StateProfile::sech2(), grid, 0.4);
        for (double f : {-0.15, 0.2, 0.5}) {
            const auto out = squeeze_closed_form(sech, SqueezeParams::from_fg(f, 0.05, 0.4));
            CHECK(out.norm_before == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(observables(out.state).dq == doctest::Approx(0.4 * std::exp(-2 * f)).epsilon(1e-6));
        }
    }

    SUBCASE("support violation") {
        CHECK_THROWS_AS(squeeze_closed_form(ground, SqueezeParams::from_dispersion(kDq0, 12.0, 0.0)), ValidationError);
    }
}

TEST_CASE("dense operator route") {
    const auto ground = fixtures::gaussian(kDense, kDq0);

    SUBCASE("derivative matrix is antisymmetric and exact on a Gaussian") {
        const auto d = derivative_matrix(kDense);
        CHECK((d + d.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        ComplexField v(kDense.size());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = std::exp(-kDense.x(j) * kDense.x(j));
        const Eigen::Map<const Eigen::VectorXcd> vm(v.data(), static_cast<Eigen::Index>(v.size()));
        const Eigen::VectorXcd dv = d.cast<cplx>() * vm;
        double worst = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j)
            worst = std::max(worst, std::abs(dv[static_cast<Eigen::Index>(j)] + 2.0 * kDense.x(j) * v[j]));
        CHECK(worst < 1e-10);
    }

    SUBCASE("pure dilation doubles the dispersion") {
        const auto op = squeeze_matrix_oracle(SqueezeParams::from_dispersion(kDq0, 2 * kDq0, 0.0), kDense);
        const auto out = WaveFunction::make_normalized(kDense, op.apply(ground.psi()));
        CHECK(observables(out).dq == doctest::Approx(2 * kDq0).epsilon(1e-5));
        const auto closed = squeeze_closed_form(ground, SqueezeParams::from_dispersion(kDq0, 2 * kDq0, 0.0));
        CHECK(max_modulus_diff(closed.state, out.psi()) < 1e-6);
        CHECK(op.unitarity_defect() < 1e-8);
    }

    SUBCASE("pure quadratic phase leaves the modulus alone") {
        const auto op = squeeze_matrix_oracle(SqueezeParams::from_fg(0.0, 0.3, kDq0), kDense);
        CHECK(max_modulus_diff(ground, op.apply(ground.psi())) < 1e-8);
    }

    SUBCASE("commutator identity") {
        const auto rep = commutator_check(kDense);
        CHECK(rep.vectors == 6);
        CHECK(rep.vector_residual < 1e-6);
        // as a matrix identity it fails on grid-scale columns
        CHECK(rep.entrywise_ratio > 1.0);
    }

    SUBCASE("dilation identity on Hermite-Gaussians") {
        for (double f : {-0.4, 0.3}) {
            const auto op = dilation_matrix(kDense, 2 * f);
            for (int order = 0; order < 3; ++order) {
                auto w = [order](double x) {
                    const double h = order == 0 ? 1.0 : order == 1 ? 2 * x : 4 * x * x - 2;
                    return h * std::exp(-0.5 * x * x);
                };
                ComplexField v(kDense.size());
                for (std::size_t j = 0; j < v.size(); ++j) v[j] = w(kDense.x(j));
                const auto out = op.apply(v);
                double worst = 0.0;
                for (std::size_t j = 0; j < v.size(); ++j) {
                    const double x = kDense.x(j);
                    worst = std::max(worst, std::abs(out[j] - std::exp(f) * w(std::exp(2 * f) * x)));
                }
                CHECK(worst < 1e-6);
            }
        }
    }

    SUBCASE("closed form agrees with exp(iM)") {
        // box sized to the wider of the two packets
        for (double f : {-0.5, 0.9}) {
            const double half = 12.0 * kDq0 * std::max(1.0, std::exp(-2 * f));
            const Grid1D box(-half, half, 512);
            const auto g = fixtures::gaussian(box, kDq0);
            CHECK(compare_with_matrix_oracle(g, SqueezeParams::from_fg(f, 0.1, kDq0)).l2_discrepancy < 1e-5);
        }
        // sech^2 tails decay slowly, so the box is wide; a small g keeps the edge chirp below Nyquist
        for (double f : {-0.15, 0.15}) {
            const double half = 36.0 * 0.4 * std::max(1.0, std::exp(-2 * f));
            const Grid1D box(-half, half, 512);
            const auto sech = profile_state(StateProfile::sech2(), box, 0.4);
            CHECK(compare_with_matrix_oracle(sech, SqueezeParams::from_fg(f, 0.02, 0.4)).l2_discrepancy < 1e-5);
        }
        // the first-order coefficient only survives when g or f vanish
        CHECK(compare_with_matrix_oracle(ground, SqueezeParams::from_fg(0.5, 0.0, kDq0), SqueezeCoefficient::FirstOrder)
                  .l2_discrepancy < 1e-5);
        CHECK(compare_with_matrix_oracle(ground, SqueezeParams::from_fg(0.5, 0.1, kDq0), SqueezeCoefficient::FirstOrder)
                  .l2_discrepancy > 1e-3);
    }

    SUBCASE("size limit") {
        CHECK_THROWS_AS(derivative_matrix(Grid1D(-20, 20, 4096)), ValidationError);
    }
}

TEST_CASE("operator-route squeezed states") {
    const auto grid = default_grid();
    const auto gauss = StateProfile::gaussian();
    const auto ground = fixtures::gaussian(grid, kDq0);

    SUBCASE("ground values give the ground state back") {
        const auto rep = squeezed_state(ground, traj(0, 0, kDq0, 0), gauss);
        for (std::size_t j = 0; j < grid.size(); ++j) CHECK(rep.state.psi()[j] == ground.psi()[j]);
    }

    SUBCASE("Glauber coherent state") {
        const auto rep = squeezed_state(ground, traj(1.0, 0.5, kDq0, 0.0, 0.3), gauss);
        CHECK(rep.overlap >= 1 - 1e-9);
        // displacement carries S0, so the states agree including the phase
        CHECK(std::abs(inner_product(rep.state, rep.reference) - 1.0) < 1e-9);
    }

    SUBCASE("squeezed and chirped: modulus agrees, phase coefficient is reported") {
        const auto t = traj(0.4, -0.2, 0.9, 0.25, 0.1);
        const auto rep = squeezed_state(ground, t, gauss);
        CHECK(rep.modulus_max_diff < 1e-6);
        CHECK(rep.fit_reference.c == doctest::Approx(rep.target_coefficient).epsilon(1e-8));
        CHECK(rep.fit_operator.c == doctest::Approx(rep.exact_coefficient).epsilon(1e-8));
        // first-order coefficient over the target is 2 / dq^2 in these units
        CHECK(rep.first_order_coefficient / rep.target_coefficient == doctest::Approx(2.0 / (0.9 * 0.9)).epsilon(1e-12));
        const auto js = to_json(rep);
        CHECK(js["coefficient"] == "exact");
        CHECK(js["overlap"].get<double>() == doctest::Approx(rep.overlap));
        CHECK(js.contains("first_order_to_target_ratio"));
    }

    SUBCASE("reference must be centred") {
        CHECK_THROWS_AS(squeezed_state(fixtures::gaussian(grid, kDq0, 0.5), traj(0, 0, kDq0, 0), gauss),
                        ValidationError);
    }
}
