#include "fixtures.hpp"

#include "squeezelab/coherent_dynamics.hpp"
#include "squeezelab/errors.hpp"
#include "squeezelab/hydrodynamics.hpp"
#include "squeezelab/state_factory.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace squeezelab;

namespace {

const PhysConstants kUnits;
const double kDq0 = fixtures::ground_dispersion(1.0);
constexpr double kPi = std::numbers::pi;

TrajectoryState at_rest(double q, double dq) {
    TrajectoryState s;
    s.q_mean = q;
    s.dq = dq;
    return s;
}

// Worst HJM residual of the assembled states, with dS/dt taken by a centred
// phase difference of neighbouring assembled states.
double assembled_hjm(const StateProfile& profile, const TrajectoryRecord& rec, const PotentialModel& pot,
                     const Grid1D& grid, double t, double h = 1e-4) {
    const auto wf = assemble_state(profile, rec.at(t), grid, kUnits);
    const auto before = assemble_state(profile, rec.at(t - h), grid, kUnits);
    const auto after = assemble_state(profile, rec.at(t + h), grid, kUnits);
    const auto fields = decompose(wf, 1e-10);
    return hjm_residual(fields, phase_rate(before, after, 2 * h), pot, t).max_abs;
}

} // namespace

TEST_CASE("dispersion law names") {
    CHECK(parse_dispersion_law("projected") == DispersionLaw::Projected);
    CHECK(parse_dispersion_law("paper-eq22") == DispersionLaw::PaperEq22);
    CHECK(to_string(DispersionLaw::PaperEq22) == "paper-eq22");
    CHECK_THROWS_AS(parse_dispersion_law("eq22"), ValidationError);
}

TEST_CASE("potential expectations") {
    const auto gauss = StateProfile::gaussian();
    const auto sech = StateProfile::sech2();

    SUBCASE("harmonic: Ehrenfest exact, torque m w^2 dq^2") {
        const double w = 1.3;
        const auto pot = potentials::harmonic(kUnits, w);
        for (const auto* p : {&gauss, &sech}) {
            const auto e = potential_expectations(*p, at_rest(0.4, 0.8), pot, 0.0);
            CHECK(e.grad_phi_mean == doctest::Approx(w * w * 0.4).epsilon(1e-10));
            CHECK(e.grad_phi_mean == doctest::Approx(pot.grad(0.4, 0.0)).epsilon(1e-10));
            CHECK(e.torque == doctest::Approx(w * w * 0.64).epsilon(1e-10));
            CHECK(e.phi_mean == doctest::Approx(0.5 * w * w * (0.16 + 0.64)).epsilon(1e-10));
        }
    }

    SUBCASE("free particle") {
        const auto e = potential_expectations(gauss, at_rest(2.0, 1.5), potentials::free_particle(), 0.0);
        CHECK(e.phi_mean == 0.0);
        CHECK(e.grad_phi_mean == 0.0);
        CHECK(e.torque == 0.0);
    }

    SUBCASE("quartic, Gaussian, centred") {
        const double lambda = 0.3, dq = 0.9;
        const auto pot = potentials::polynomial({0.0, 0.0, 0.0, 0.0, lambda});
        const auto e = potential_expectations(gauss, at_rest(0.0, dq), pot, 0.0);
        // brute force at two resolutions
        double brute[2] = {0, 0};
        for (int r = 0; r < 2; ++r) {
            const double h = r == 0 ? 1e-3 : 5e-4;
            double acc = 0.0;
            for (double x = -12 * dq; x <= 12 * dq; x += h) {
                const double rho = std::exp(-x * x / (2 * dq * dq)) / std::sqrt(2 * kPi * dq * dq);
                acc += x * 4 * lambda * x * x * x * rho * h;
            }
            brute[r] = acc;
        }
        CHECK(brute[0] == doctest::Approx(brute[1]).epsilon(1e-10));
        CHECK(e.torque == doctest::Approx(brute[1]).epsilon(1e-9));
        CHECK(e.torque == doctest::Approx(12 * lambda * std::pow(dq, 4)).epsilon(1e-9));
        CHECK(std::abs(e.grad_phi_mean) < 1e-14);
        CHECK(feedback_diagnostic(gauss, at_rest(0.0, dq), pot, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
    }

    SUBCASE("non-convergent quadrature is reported") {
        // a kink between quadrature nodes spoils the smooth-integrand convergence
        const PotentialModel kink(
            PotentialKind::Analytic, "kink", [](double x, double) { return std::abs(x - 0.013); },
            [](double x, double) { return x > 0.013 ? 1.0 : -1.0; }, true);
        CHECK_THROWS_AS(potential_expectations(gauss, at_rest(0.0, 1.0), kink, 0.0), NumericalError);
    }
}

TEST_CASE("right-hand side") {
    const auto gauss = StateProfile::gaussian();

    SUBCASE("harmonic fixed point") {
        const auto d = rhs(at_rest(0.0, kDq0), gauss, potentials::harmonic(kUnits, 1.0), DispersionLaw::Projected, 0.0);
        CHECK(std::abs(d.q_mean) < 1e-15);
        CHECK(std::abs(d.v_mean) < 1e-15);
        CHECK(std::abs(d.dq) < 1e-15);
        CHECK(std::abs(d.dq_dot) < 1e-12);
        CHECK(d.S0 == doctest::Approx(-0.5).epsilon(1e-12));
    }

    SUBCASE("paper-eq22 mode is not stationary at the ground state") {
        const auto d = rhs(at_rest(0.0, kDq0), gauss, potentials::harmonic(kUnits, 1.0), DispersionLaw::PaperEq22, 0.0);
        CHECK(d.dq_dot < -0.1);
    }

    SUBCASE("free spreading law") {
        for (double dq : {0.3, 0.7, 2.0}) {
            const auto d = rhs(at_rest(1.0, dq), gauss, potentials::free_particle(), DispersionLaw::Projected, 0.0);
            CHECK(d.dq_dot == doctest::Approx(1.0 / (4 * dq * dq * dq)).epsilon(1e-12));
        }
    }

    SUBCASE("Ermakov equation in projected mode") {
        const double w = 1.7;
        for (double dq : {0.3, 0.7, 2.0}) {
            const auto d = rhs(at_rest(0.0, dq), gauss, potentials::harmonic(kUnits, w), DispersionLaw::Projected, 0.0);
            CHECK(d.dq_dot == doctest::Approx(1.0 / (4 * dq * dq * dq) - w * w * dq).epsilon(1e-10));
        }
    }

    SUBCASE("collapsed dispersion") {
        auto s = at_rest(0.0, 1.0);
        s.dq = 5e-7;
        CHECK_THROWS_AS(rhs(s, gauss, potentials::free_particle(), DispersionLaw::Projected, 0.0), NumericalError);
    }
}

TEST_CASE("feedback diagnostic") {
    const auto gauss = StateProfile::gaussian();
    const auto s = at_rest(0.6, 0.9);
    CHECK(std::abs(feedback_diagnostic(gauss, s, potentials::harmonic(kUnits, 1.4), 0.3)) < 1e-10);
}

TEST_CASE("integrate: closed-form trajectories") {
    const auto gauss = StateProfile::gaussian();

    SUBCASE("coherent state over ten periods") {
        const auto rec = integrate(at_rest(1.0, kDq0), gauss, potentials::harmonic(kUnits, 1.0),
                                   DispersionLaw::Projected, 20 * kPi);
        double q_err = 0.0, dq_err = 0.0, ehrenfest = 0.0;
        for (const auto& s : rec.samples()) {
            q_err = std::max(q_err, std::abs(s.state.q_mean - std::cos(s.state.t)));
            dq_err = std::max(dq_err, std::abs(s.state.dq - kDq0));
            ehrenfest = std::max(ehrenfest, std::abs(s.derivative.v_mean + s.expectations.grad_phi_mean));
            CHECK(std::abs(s.feedback_residual) < 1e-10);
        }
        CHECK(q_err < 1e-8);
        CHECK(dq_err < 1e-8);
        CHECK(ehrenfest < 1e-12);
        CHECK(rec.energy_drift() < 1e-10);
        // S0 is the ground-state rotation plus the classical action
        CHECK(rec.samples().back().uncertainty_product == doctest::Approx(0.5).epsilon(1e-10));
    }

    SUBCASE("sudden frequency quench") {
        const auto rec = integrate(at_rest(0.0, kDq0), gauss, potentials::quench(kUnits, 1.0, 2.0),
                                   DispersionLaw::Projected, 2 * kPi);
        double worst = 0.0, lo = 1.0, hi = 0.0;
        for (const auto& s : rec.samples()) {
            const double t = s.state.t;
            const double c = std::cos(2 * t), sn = std::sin(2 * t);
            const double expected = 0.5 * (c * c + 0.25 * sn * sn);
            const double dq2 = s.state.dq * s.state.dq;
            worst = std::max(worst, std::abs(dq2 - expected));
            lo = std::min(lo, dq2);
            hi = std::max(hi, dq2);
        }
        CHECK(worst < 1e-9);
        CHECK(lo == doctest::Approx(0.125).epsilon(1e-6));
        CHECK(hi == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("free spreading") {
        const auto rec = integrate(at_rest(0.0, kDq0), gauss, potentials::free_particle(), DispersionLaw::Projected, 8.0);
        double worst = 0.0;
        for (const auto& s : rec.samples()) {
            const double t = s.state.t;
            worst = std::max(worst, std::abs(s.state.dq * s.state.dq - (0.5 + std::pow(t / (2 * kDq0), 2))));
        }
        CHECK(worst < 1e-9);
    }

    SUBCASE("fourth-order convergence") {
        const auto pot = potentials::harmonic(kUnits, 1.3);
        auto start = at_rest(0.5, 0.45);
        start.dq_dot = 0.2;
        IntegrateOptions coarse;
        coarse.dt = 2e-3;
        IntegrateOptions fine;
        fine.dt = 1e-3;
        const auto a = integrate(start, gauss, pot, DispersionLaw::Projected, 5.0, coarse);
        const auto b = integrate(start, gauss, pot, DispersionLaw::Projected, 5.0, fine);
        CHECK(std::abs(a.samples().back().state.dq - b.samples().back().state.dq) < 1e-9);
    }

    SUBCASE("S0 closure: HJM residual at the centre") {
        const auto grid = default_grid();
        const auto pot = potentials::quench(kUnits, 1.0, 2.0);
        auto start = at_rest(0.8, kDq0);
        start.v_mean = -0.3;
        const auto rec = integrate(start, gauss, pot, DispersionLaw::Projected, 2.0);
        for (double t : {0.5, 1.0, 1.5}) {
            const auto s = rec.at(t);
            const auto wf = assemble_state(gauss, s, grid, kUnits);
            const auto fields = decompose(wf, 1e-10);
            const double h = 1e-4;
            const auto rate = phase_rate(assemble_state(gauss, rec.at(t - h), grid, kUnits),
                                         assemble_state(gauss, rec.at(t + h), grid, kUnits), 2 * h);
            const auto res = hjm_residual(fields, rate, pot, t);
            CHECK(std::abs(res.field[grid.nearest_index(s.q_mean)]) < 1e-6);
            CHECK(res.max_abs < 1e-5);
        }
    }

    SUBCASE("invalid spans and collapse") {
        CHECK_THROWS_AS(integrate(at_rest(0, 1), gauss, potentials::free_particle(), DispersionLaw::Projected, -1.0),
                        ValidationError);
        IntegrateOptions bad;
        bad.dt = 0.0;
        CHECK_THROWS_AS(integrate(at_rest(0, 1), gauss, potentials::free_particle(), DispersionLaw::Projected, 1.0, bad),
                        ValidationError);
        // a strongly over-squeezing paper-eq22 run collapses the packet
        CHECK_THROWS_AS(integrate(at_rest(0, kDq0), gauss, potentials::harmonic(kUnits, 1.0), DispersionLaw::PaperEq22,
                                  20.0),
                        NumericalError);
        IntegrateOptions halt;
        halt.halt_on_failure = true;
        const auto partial = integrate(at_rest(0, kDq0), gauss, potentials::harmonic(kUnits, 1.0),
                                       DispersionLaw::PaperEq22, 20.0, halt);
        CHECK_FALSE(partial.halt_reason().empty());
        CHECK(partial.t_end() < 20.0);
        CHECK(partial.samples().back().state.dq >= kMinDispersion);
    }
}

TEST_CASE("trajectory record access") {
    const auto gauss = StateProfile::gaussian();
    const auto rec = integrate(at_rest(1.0, kDq0), gauss, potentials::harmonic(kUnits, 1.0), DispersionLaw::Projected,
                               1.0);
    CHECK(rec.size() == 1001);
    CHECK(rec.at(0.4567).q_mean == doctest::Approx(std::cos(0.4567)).epsilon(1e-11));
    CHECK(rec.index_of(0.25).value() == 250);
    CHECK_FALSE(rec.index_of(0.2505).has_value());
    CHECK_THROWS_AS(rec.at(1.01), ValidationError);
    CHECK_THROWS_AS(rec.at(-0.01), ValidationError);

    std::ostringstream csv;
    write_trajectory_csv(rec, csv, 100);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# squeezelab-schema v1");
    std::getline(in, line);
    CHECK(line == "t,q_mean,v_mean,dq,dq_dot,S0,phi_mean,uncertainty_product,f,g,feedback_residual");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 11);
}

TEST_CASE("potential synthesis") {
    const auto grid = default_grid();
    const auto gauss = StateProfile::gaussian();

    SUBCASE("harmonic coherent trajectory returns the oscillator") {
        const auto pot = potentials::harmonic(kUnits, 1.0);
        const auto rec = integrate(at_rest(1.0, kDq0), gauss, pot, DispersionLaw::Projected, 2 * kPi);
        SynthesisOptions opts;
        opts.gauge_reference = &pot;
        const auto synth = synthesize_potential(gauss, rec, grid, opts);
        CHECK(synth.kind() == PotentialKind::SynthesizedTable);
        double worst = 0.0;
        for (double t : {0.0, 0.7, 2.0001, 4.5, rec.t_end()}) {
            const double q = std::cos(t);
            for (double x = q - 6 * kDq0; x <= q + 6 * kDq0; x += 0.01)
                worst = std::max(worst, std::abs(synth.phi(x, t) - pot.phi(x, t)));
        }
        CHECK(worst < 1e-5);
        CHECK_THROWS_AS(synth.phi(0.0, rec.t_end() + 0.1), ValidationError);
        CHECK_THROWS_AS(synth.phi(0.0, -0.1), ValidationError);
        CHECK(assembled_hjm(gauss, rec, synth, grid, 3.0) < 1e-5);
    }

    SUBCASE("driven Gaussian keeps a quadratic well") {
        // harmonic well plus a smooth push: dq stays put while the centre wanders
        const PotentialModel driven(
            PotentialKind::Analytic, "driven oscillator",
            [](double x, double t) { return 0.5 * x * x - 0.4 * std::sin(1.7 * t) * x; },
            [](double x, double t) { return x - 0.4 * std::sin(1.7 * t); }, false);
        const auto rec = integrate(at_rest(0.2, kDq0), gauss, driven, DispersionLaw::Projected, 3.0);
        SynthesisOptions opts;
        opts.time_stride = 2;
        opts.gauge_reference = &driven;
        const auto synth = synthesize_potential(gauss, rec, grid, opts);
        for (double t : {0.5, 1.3, 2.5}) {
            const auto s = rec.at(t);
            const auto d = rec.derivative_at(t);
            // quadratic in (x - q) with linear coefficient -m <v>'
            double worst = 0.0;
            for (double x = s.q_mean - 5 * kDq0; x <= s.q_mean + 5 * kDq0; x += 0.01) {
                const double r = x - s.q_mean;
                const double model = driven.phi(s.q_mean, t) - d.v_mean * r + 0.5 * r * r;
                worst = std::max(worst, std::abs(synth.phi(x, t) - model));
            }
            CHECK(worst < 1e-5);
            CHECK(d.v_mean == doctest::Approx(-driven.grad(s.q_mean, t)).epsilon(1e-9));
            CHECK(assembled_hjm(gauss, rec, synth, grid, t) < 1e-5);
            CHECK(std::abs(feedback_diagnostic(gauss, s, synth, t)) < 1e-6);
        }
    }

    SUBCASE("sech2 profile rebuilds the Poschl-Teller well") {
        const auto sech = StateProfile::sech2();
        const double dq = 0.5;
        const double alpha = kPi / std::sqrt(12.0) / dq;
        const auto pt = potentials::poschl_teller(kUnits, alpha);
        const auto rec = integrate(at_rest(0.0, dq), sech, pt, DispersionLaw::Projected, 1.0);
        double dq_err = 0.0;
        for (const auto& s : rec.samples()) dq_err = std::max(dq_err, std::abs(s.state.dq - dq));
        CHECK(dq_err < 1e-8);
        CHECK(rec.samples().back().derivative.S0 == doctest::Approx(0.5 * alpha * alpha).epsilon(1e-8));
        const auto synth = synthesize_potential(sech, rec, grid);
        double worst = 0.0;
        const std::size_t centre = grid.nearest_index(0.0);
        for (std::size_t j = grid.nearest_index(-6 * dq); j <= grid.nearest_index(6 * dq); ++j) {
            const double x = grid.x(j);
            worst = std::max(worst, std::abs((synth.phi(x, 0.5) - synth.phi(grid.x(centre), 0.5)) -
                                             (pt.phi(x, 0) - pt.phi(grid.x(centre), 0))));
        }
        CHECK(worst < 1e-6);
    }

    SUBCASE("sparse records are refused") {
        IntegrateOptions sparse;
        sparse.dt = 0.05;
        const auto rec = integrate(at_rest(0, kDq0), gauss, potentials::harmonic(kUnits, 1.0), DispersionLaw::Projected,
                                   1.0, sparse);
        CHECK_THROWS_AS(synthesize_potential(gauss, rec, grid), ValidationError);
    }
}
