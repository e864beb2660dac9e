#include "fixtures.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/operator_algebra.hpp"
#include "squeezelab/schrodinger_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace squeezelab;

namespace {

const PhysConstants kUnits;
const double kDq0 = fixtures::ground_dispersion(1.0);
constexpr double kPi = std::numbers::pi;

PropagatorConfig config(double dt, std::size_t stride = 1) {
    PropagatorConfig cfg;
    cfg.dt = dt;
    cfg.output_stride = stride;
    return cfg;
}

TrajectoryState at_rest(double q, double dq) {
    TrajectoryState s;
    s.q_mean = q;
    s.dq = dq;
    return s;
}

double l2_distance(const WaveFunction& a, const WaveFunction& b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.psi().size(); ++j) acc += std::norm(a.psi()[j] - b.psi()[j]);
    return std::sqrt(acc * a.grid().dx());
}

} // namespace

TEST_CASE("configuration validation") {
    const auto wf = fixtures::gaussian(default_grid(), kDq0);
    const auto pot = potentials::harmonic(kUnits, 1.0);
    CHECK_THROWS_AS(propagate(wf, pot, config(0.0), 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(propagate(wf, pot, config(1e-3, 0), 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(propagate(wf, pot, config(1e-3), 1.0, 0.0), ValidationError);
}

TEST_CASE("harmonic fixtures") {
    const auto grid = default_grid();
    const auto pot = potentials::harmonic(kUnits, 1.0);

    SUBCASE("ground state is stationary for ten periods") {
        const auto ground = fixtures::gaussian(grid, kDq0);
        const auto run = propagate(ground, pot, config(1e-3, 1000), 0.0, 20 * kPi);
        for (const auto& fr : run.frames) CHECK(overlap(fr.wf, ground) >= 1 - 1e-9);
        CHECK(run.steps == 62832);
    }

    SUBCASE("displaced ground state follows cos t") {
        const auto start = fixtures::gaussian(grid, kDq0, 1.0);
        const auto run = propagate(start, pot, config(kDefaultPropagatorStep, 400), 0.0, 2 * kPi);
        double q_err = 0.0, dq_err = 0.0;
        for (const auto& fr : run.frames) {
            const auto o = observables(fr.wf);
            q_err = std::max(q_err, std::abs(o.q_mean - std::cos(fr.t)));
            dq_err = std::max(dq_err, std::abs(o.dq - kDq0));
        }
        CHECK(q_err < 1e-6);
        CHECK(dq_err < 1e-6);
        CHECK(run.max_norm_drift < 1e-10);
    }

    SUBCASE("energy is conserved") {
        const auto start = fixtures::gaussian(grid, 0.5, 1.0, 0.3);
        const auto run = propagate(start, pot, config(kDefaultPropagatorStep, 4000), 0.0, 20 * kPi);
        const double e0 = energy(run.frames.front().wf, pot, 0.0);
        double worst = 0.0;
        for (const auto& fr : run.frames) worst = std::max(worst, std::abs(energy(fr.wf, pot, fr.t) - e0));
        CHECK(worst / std::abs(e0) < 1e-8);
    }

    SUBCASE("norm drift over 1e4 steps") {
        const auto start = fixtures::gaussian(grid, 0.6, -0.5, 1.0, 0.2);
        const auto run = propagate(start, potentials::quench(kUnits, 1.0, 1.5), config(1e-3, 10000), 0.0, 10.0);
        CHECK(run.steps == 10000);
        CHECK(run.max_norm_drift < 1e-10);
    }

    SUBCASE("second-order convergence") {
        const auto start = fixtures::gaussian(grid, 0.5, 1.0);
        const auto drive = potentials::time_harmonic(
            kUnits, [](double t) { return 1.0 + 0.3 * std::sin(2 * t); }, "modulated");
        auto final_state = [&](double dt) { return propagate(start, drive, config(dt, 100000), 0.0, 2.0).frames.back().wf; };
        const auto ref = final_state(0.02 / 64);
        const double e1 = l2_distance(final_state(0.02), ref);
        const double e2 = l2_distance(final_state(0.01), ref);
        CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));
    }

    SUBCASE("halving gate") {
        const auto start = fixtures::gaussian(grid, kDq0, 1.0);
        const double fine = halving_gap(start, pot, config(kDefaultPropagatorStep), 0.0, 2 * kPi);
        CHECK(fine >= 0.0);
        CHECK(fine < 1e-8);
        // a coarse step fails the gate; the supplied final state is reused as is
        const auto coarse = propagate(start, pot, config(0.1, 1000), 0.0, 2 * kPi);
        const double gap = halving_gap(start, pot, config(0.1), 0.0, 2 * kPi, &coarse.frames.back().wf);
        CHECK(gap > 1e-8);
        CHECK(gap == doctest::Approx(halving_gap(start, pot, config(0.1), 0.0, 2 * kPi)).epsilon(1e-12));
    }
}

TEST_CASE("frequency quench") {
    const auto grid = default_grid();
    const auto pot = potentials::quench(kUnits, 1.0, 2.0);
    const auto ground = fixtures::gaussian(grid, kDq0);
    const auto run = propagate(ground, pot, config(kDefaultPropagatorStep, 200), 0.0, kPi);
    double worst = 0.0;
    for (const auto& fr : run.frames) {
        const double c = std::cos(2 * fr.t), s = std::sin(2 * fr.t);
        const double dq = observables(fr.wf).dq;
        worst = std::max(worst, std::abs(dq * dq - 0.5 * (c * c + 0.25 * s * s)));
    }
    CHECK(worst < 1e-5);

    SUBCASE("projected model tracks the solver") {
        IntegrateOptions opts;
        opts.dt = kDefaultPropagatorStep;
        const auto rec = integrate(at_rest(0, kDq0), StateProfile::gaussian(), pot, DispersionLaw::Projected, kPi, opts);
        const auto rep = compare_with_model(run.frames, StateProfile::gaussian(), rec);
        CHECK(rep.rows.size() == run.frames.size());
        CHECK(rep.min_overlap() >= 1 - 1e-5);
        std::ostringstream csv;
        write_fidelity_csv(rep, csv);
        CHECK(csv.str().rfind("# squeezelab-schema v1\nt,overlap,density_l2,q_mean_delta,dq_delta\n", 0) == 0);
    }

    SUBCASE("paper-eq22 model drifts away") {
        IntegrateOptions opts;
        opts.dt = kDefaultPropagatorStep;
        const auto rec =
            integrate(at_rest(0, kDq0), StateProfile::gaussian(), pot, DispersionLaw::PaperEq22, 0.5, opts);
        std::vector<Frame> early;
        for (const auto& fr : run.frames)
            if (fr.t <= 0.5 + 1e-12) early.push_back(fr);
        const auto rep = compare_with_model(early, StateProfile::gaussian(), rec);
        CHECK(rep.rows.front().overlap == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.min_overlap() < 0.99);
    }

    SUBCASE("time grids must line up") {
        const auto rec = integrate(at_rest(0, kDq0), StateProfile::gaussian(), pot, DispersionLaw::Projected, kPi);
        CHECK_THROWS_AS(compare_with_model(run.frames, StateProfile::gaussian(), rec), ValidationError);
    }
}

TEST_CASE("harmonic coherent run matches the model") {
    const auto grid = default_grid();
    const auto pot = potentials::harmonic(kUnits, 1.0);
    const auto gauss = StateProfile::gaussian();
    IntegrateOptions opts;
    opts.dt = kDefaultPropagatorStep;
    const auto rec = integrate(at_rest(1.0, kDq0), gauss, pot, DispersionLaw::Projected, 2 * kPi, opts);
    const auto start = assemble_state(gauss, rec.samples().front().state, grid, kUnits);
    const auto run = propagate(start, pot, config(kDefaultPropagatorStep, 800), 0.0, rec.t_end());
    const auto rep = compare_with_model(run.frames, gauss, rec);
    CHECK(rep.min_overlap() >= 1 - 1e-8);
    // the model phase includes S0, so the inner product itself is 1
    const auto last = assemble_state(gauss, rec.samples().back().state, grid, kUnits);
    CHECK(std::abs(inner_product(last, run.frames.back().wf) - 1.0) < 1e-6);
}

TEST_CASE("leakage aborts the run") {
    const auto grid = default_grid();
    const auto fast = fixtures::gaussian(grid, kDq0, 10.0, 8.0);
    CHECK_THROWS_AS(propagate(fast, potentials::free_particle(), config(1e-3, 100), 0.0, 2.0), NumericalError);
}

TEST_CASE("frame export") {
    const auto grid = Grid1D(-10, 10, 32);
    const Frame fr{0.5, fixtures::gaussian(grid, 0.5)};
    std::ostringstream out;
    write_frame_csv(fr, out);
    std::istringstream in(out.str());
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "# squeezelab-schema v1");
    std::getline(in, line);
    CHECK(line == "# t=0.5");
    std::getline(in, line);
    CHECK(line == "x,re_psi,im_psi");
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 32);
}

TEST_CASE("imaginary-time relaxation") {
    const auto grid = default_grid();

    SUBCASE("harmonic") {
        const auto guess = fixtures::gaussian(grid, 1.3, 0.4);
        RelaxOptions opts;
        opts.dtau = 2e-4;
        const auto g = relax_ground_state(guess, potentials::harmonic(kUnits, 1.0), opts);
        CHECK(overlap(g, fixtures::gaussian(grid, kDq0)) >= 1 - 1e-9);
        CHECK(energy(g, potentials::harmonic(kUnits, 1.0), 0.0) == doctest::Approx(0.5).epsilon(1e-7));
    }

    SUBCASE("Poschl-Teller well gives sech") {
        const double alpha = 1.6;
        const auto pot = potentials::poschl_teller(kUnits, alpha);
        RelaxOptions opts;
        opts.dtau = 2e-4;
        const auto g = relax_ground_state(fixtures::gaussian(grid, 0.8), pot, opts);
        ComplexField sech(grid.size());
        for (std::size_t j = 0; j < grid.size(); ++j) sech[j] = 1.0 / std::cosh(alpha * grid.x(j));
        CHECK(overlap(g, WaveFunction::make_normalized(grid, sech)) >= 1 - 1e-9);
        CHECK(energy(g, pot, 0.0) == doctest::Approx(-0.5 * alpha * alpha).epsilon(1e-7));
    }

    SUBCASE("time-dependent potential refused") {
        CHECK_THROWS_AS(relax_ground_state(fixtures::gaussian(grid, 1.0), potentials::quench(kUnits, 1, 2)),
                        ValidationError);
    }
}
