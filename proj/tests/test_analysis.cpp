#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "pca/analysis.hpp"
#include "pca/rng.hpp"

using namespace pca;

namespace {

ModelParams fixture() { return ModelParams{}; }

TherapySchedule no_therapy(const ModelParams& p) {
    TherapySchedule sched;
    sched.finalize(p);
    return sched;
}

Trajectory run_fixture(const Grid& grid, const ModelParams& p, const TherapySchedule& sched,
                       double t_end, std::uint64_t seed) {
    RunConfig run;
    run.dim = grid.dim;
    run.nx = grid.n[0];
    run.ny = grid.n[1];
    run.lx = grid.extent[0];
    run.ly = grid.extent[1];
    run.t_end = t_end;
    run.seed = seed;
    const State s = build_initial_state(grid, p, run);
    return integrate(s, run, p, sched, grid);
}

}  // namespace

TEST_CASE("predicted rate: uncoupled case is half the slowest decay", "[analysis]") {
    ModelParams p;
    p.gamma_c = p.gamma_h = 1.0;
    p.alpha_c = p.alpha_h = 0.3;
    p.gamma_p = 1.0;
    p.lambda = 1.0;
    const auto sched = no_therapy(p);
    REQUIRE(predict_beta(p, sched, 10.0, 0.0) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("predicted rate: small margin wins the minimum", "[analysis]") {
    ModelParams p;
    p.gamma_c = p.gamma_h = 1.0;
    p.alpha_c = p.alpha_h = 0.3;
    p.gamma_p = 1.0;
    p.lambda = 0.4;
    const auto sched = no_therapy(p);
    REQUIRE(predict_beta(p, sched, 1.0, 0.0) == Catch::Approx(0.4).margin(1e-15));
}

TEST_CASE("predicted rate: decay fixture gives one half", "[analysis]") {
    const ModelParams p = fixture();
    const auto sched = no_therapy(p);
    REQUIRE(predict_beta(p, sched, 9.3726, 0.1) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("predicted rate throws with the margin when the condition fails", "[analysis]") {
    ModelParams p = fixture();
    p.lambda = 1e-6;
    const auto sched = no_therapy(p);
    try {
        predict_beta(p, sched, 1.0, 0.1);
        FAIL("expected ConditionNotMet");
    } catch (const ConditionNotMet& e) {
        REQUIRE(e.margin() < 0.0);
    }
}

TEST_CASE("predicted rate never exceeds either half-rate", "[analysis]") {
    Xoshiro256pp rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        ModelParams p = fixture();
        p.lambda = rng.uniform(0.1, 5.0);
        p.gamma_h = rng.uniform(0.1, 3.0);
        p.gamma_c = rng.uniform(0.1, 3.0);
        p.gamma_p = rng.uniform(0.1, 3.0);
        const auto sched = no_therapy(p);
        const auto c = validate_decay_condition(p, sched, rng.uniform(1.0, 30.0),
                                                rng.uniform(0.0, 0.5));
        if (!c.holds) continue;
        REQUIRE(c.beta <= p.gamma_h / 2.0 + 1e-15);
        REQUIRE(c.beta <= p.gamma_p / 2.0 + 1e-15);
    }
}

TEST_CASE("rate fit recovers a synthetic exponential exactly", "[analysis]") {
    std::vector<std::pair<double, double>> series;
    for (int k = 0; k <= 100; ++k) {
        const double t = 0.1 * k;
        series.emplace_back(t, 3.0 * std::exp(-2.0 * t));
    }
    const auto fit = fit_decay_rate(series, 0.0, 10.0);
    REQUIRE(fit.rate == Catch::Approx(2.0).margin(1e-10));
    REQUIRE(fit.residual <= 1e-10);
}

TEST_CASE("rate fit of a constant series is zero", "[analysis]") {
    std::vector<std::pair<double, double>> series;
    for (int k = 0; k <= 50; ++k) series.emplace_back(0.2 * k, 0.7);
    const auto fit = fit_decay_rate(series, 0.0, 10.0);
    REQUIRE(fit.rate == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("rate fit window errors", "[analysis]") {
    std::vector<std::pair<double, double>> series = {{0.0, 1.0}, {1.0, 0.5}};
    REQUIRE_THROWS_AS(fit_decay_rate(series, 1.0, 0.5), WindowTooShort);
    REQUIRE_THROWS_AS(fit_decay_rate(series, 0.9, 1.1), WindowTooShort);
    series.emplace_back(2.0, 1e-15);  // at the floor
    REQUIRE_THROWS_AS(fit_decay_rate(series, 0.0, 3.0), SeriesUnderflow);
}

TEST_CASE("default fit window skips the transient and the underflow tail", "[analysis]") {
    {
        std::vector<std::pair<double, double>> series;
        for (int k = 0; k <= 200; ++k) {
            const double t = 0.1 * k;
            series.emplace_back(t, std::exp(-2.0 * t));  // floor reached near t = 16.1
        }
        const auto [ta, tb] = default_fit_window(series);
        REQUIRE(ta == Catch::Approx(10.0));
        REQUIRE(tb > 15.0);
        REQUIRE(tb < 16.2);
        const auto fit = fit_decay_rate(series, ta, tb);
        REQUIRE(fit.rate == Catch::Approx(2.0).margin(1e-9));
    }
    {
        // everything past the midpoint underflows: no usable window
        std::vector<std::pair<double, double>> series;
        for (int k = 0; k <= 200; ++k) {
            const double t = 0.1 * k;
            series.emplace_back(t, std::exp(-4.0 * t));
        }
        REQUIRE_THROWS_AS(default_fit_window(series), WindowTooShort);
    }
}

TEST_CASE("bound checks fail on recorded excursions and skip without hypotheses",
          "[analysis]") {
    Trajectory traj;
    traj.violations.max_phi = 1e-5;
    traj.violations.max_p = 2e-9;
    traj.sigma_hypothesis = false;
    traj.p_hypothesis = true;
    const auto checks = check_bounds(traj, 1e-8);
    REQUIRE(checks.size() == 3);
    REQUIRE(checks[0].name == "phi_range");
    REQUIRE(checks[0].status == CheckStatus::Fail);
    REQUIRE(checks[0].margin == Catch::Approx(1e-8 - 1e-5));
    REQUIRE(checks[1].name == "sigma_range");
    REQUIRE(checks[1].status == CheckStatus::Skip);
    REQUIRE_FALSE(checks[1].asserted);
    REQUIRE(checks[2].name == "psa_nonnegative");
    REQUIRE(checks[2].status == CheckStatus::Pass);
}

TEST_CASE("absorbing constants: conservative rate never exceeds the base rate",
          "[analysis]") {
    Xoshiro256pp rng(66);
    for (int trial = 0; trial < 100; ++trial) {
        ModelParams p = fixture();
        p.lambda = rng.uniform(0.001, 5.0);
        p.gamma_h = rng.uniform(0.1, 3.0);
        p.gamma_p = rng.uniform(0.1, 3.0);
        const auto sched = no_therapy(p);
        const double lam1 = rng.uniform(0.1, 30.0);
        const auto c = absorbing_constants(p, sched, lam1, 1.0, 1.0);
        REQUIRE(c.kappa ==
                Catch::Approx(std::min(c.kappa_base, 2.0 * p.lambda * lam1)).epsilon(1e-15));
        REQUIRE(c.kappa <= c.kappa_base);
    }
}

TEST_CASE("absorbing constants vanish with the sources", "[analysis]") {
    ModelParams p = fixture();
    p.S_h = 1e-12;
    p.S_c = 1e-12;
    p.alpha_h = 1e-12;
    p.alpha_c = 1e-12;
    p.M = 0.0;
    const auto sched = no_therapy(p);
    const auto c = absorbing_constants(p, sched, 9.87, 1.0, 1.0);
    REQUIRE(c.C_bar < 1e-10);
}

TEST_CASE("absorbing inequalities hold along a fixture run", "[analysis]") {
    const ModelParams p = fixture();
    const auto sched = no_therapy(p);
    const Grid grid(64, 1.0);
    const auto traj = run_fixture(grid, p, sched, 8.0, 7);
    const double lam1 = lambda1(grid);
    const auto c = absorbing_constants(p, sched, lam1, grid.measure(),
                                       traj.series.front().e_hat());
    const auto checks = check_absorbing(traj, c);
    REQUIRE(checks.size() == 2);
    for (const auto& ck : checks) {
        INFO(ck.name << " margin " << ck.margin);
        REQUIRE(ck.status == CheckStatus::Pass);
    }
}

TEST_CASE("H1 windows: steady start reports the stationary norm", "[analysis]") {
    const ModelParams p = fixture();
    const auto sched = no_therapy(p);
    const Grid grid(24, 1.0);
    RunConfig run;
    run.nx = 24;
    run.t_end = 4.0;
    run.ic = IcKind::Constant;
    run.ic_phi = 0.0;
    run.ic_sigma = p.sigma_infinity();
    run.ic_p = p.p_infinity();
    const State s = build_initial_state(grid, p, run);
    const auto traj = integrate(s, run, p, sched, grid);
    const auto h1 = check_h1_bound(traj, 0.0);
    REQUIRE(h1.check.status == CheckStatus::Pass);
    const double steady_h1 = std::sqrt(std::pow(p.sigma_infinity(), 2) * grid.measure() +
                                       std::pow(p.p_infinity(), 2) * grid.measure());
    REQUIRE(h1.empirical_c1 == Catch::Approx(steady_h1).margin(1e-9));
    REQUIRE(h1.eventual_c1 == Catch::Approx(steady_h1).margin(1e-9));
}

TEST_CASE("H1 windows need enough run time", "[analysis]") {
    const ModelParams p = fixture();
    const auto sched = no_therapy(p);
    const Grid grid(16, 1.0);
    const auto traj = run_fixture(grid, p, sched, 1.5, 1);
    REQUIRE_THROWS_AS(check_h1_bound(traj, 0.0), RunTooShort);
}

TEST_CASE("exponential decay envelope holds on the fixture run", "[analysis]") {
    const ModelParams p = fixture();
    const auto sched = no_therapy(p);
    const Grid grid(64, 1.0);
    const auto traj = run_fixture(grid, p, sched, 12.0, 21);
    const double lam1 = lambda1(grid);
    const double f_sup = f_sup_bound(p, sched);
    const auto condition = validate_decay_condition(p, sched, lam1, f_sup);
    REQUIRE(condition.holds);
    REQUIRE(condition.beta == Catch::Approx(0.5).margin(1e-15));
    const auto decay = check_exponential_decay(traj, condition);
    INFO(decay.check.detail);
    REQUIRE(decay.check.status == CheckStatus::Pass);
    REQUIRE(decay.fit_e);
    REQUIRE(decay.fit_e->rate >= 0.5 - 1e-3);

    // the envelope also caps the final phase norm
    const auto& last = traj.series.back();
    REQUIRE(last.l2_phi <= std::sqrt(traj.series.front().e_dev) *
                                   std::exp(-condition.beta * last.t / 2.0) +
                               1e-8);
}

TEST_CASE("decay envelope holds across a family of admissible coefficients",
          "[analysis]") {
    Xoshiro256pp rng(777);
    const Grid grid(48, 1.0);
    const double lam1 = lambda1(grid);
    int tested = 0;
    for (int trial = 0; trial < 40 && tested < 12; ++trial) {
        ModelParams p;
        p.lambda = rng.uniform(0.5, 2.0);
        p.gamma_h = rng.uniform(0.5, 2.0);
        p.gamma_c = p.gamma_h + rng.uniform(0.0, 1.0);
        p.gamma_p = rng.uniform(0.5, 2.0);
        p.S_h = rng.uniform(0.2, 1.0);
        p.S_c = p.S_h + rng.uniform(0.0, 0.5);
        p.alpha_h = rng.uniform(0.1, 0.5);
        p.alpha_c = p.alpha_h + rng.uniform(0.0, 0.3);
        p.M = rng.uniform(0.0, 0.1);
        p.rho = p.A = rng.uniform(0.0, 0.5);
        TherapySchedule sched;
        sched.finalize(p);
        const auto condition =
            validate_decay_condition(p, sched, lam1, f_sup_bound(p, sched));
        if (!condition.holds || condition.beta <= 0.0) continue;
        ++tested;

        RunConfig run;
        run.nx = 48;
        run.t_end = 8.0;
        run.seed = 1000 + static_cast<std::uint64_t>(trial);
        const State s = build_initial_state(grid, p, run);
        const auto traj = integrate(s, run, p, sched, grid);
        const auto decay = check_exponential_decay(traj, condition);
        INFO("trial " << trial << " beta " << condition.beta << ": " << decay.check.detail);
        REQUIRE(decay.check.status == CheckStatus::Pass);
    }
    REQUIRE(tested >= 12);
}

TEST_CASE("phase verdicts: settled at zero, settled elsewhere", "[analysis]") {
    const auto sched0 = no_therapy(fixture());
    {
        const ModelParams p = fixture();
        const Grid grid(32, 1.0);
        const auto traj = run_fixture(grid, p, sched0, 10.0, 3);
        const auto r = check_phi_vanishes(traj, 1.0, 1e-6);
        REQUIRE(r.status == CheckStatus::Info);
        REQUIRE(r.detail.find("converged-to-zero") != std::string::npos);
    }
    {
        // strongly tilted balance pushes the phase toward one
        ModelParams p = fixture();
        p.lambda = 0.01;
        p.M = 1.0;
        p.m_ref = 1.0;
        p.rho = p.A = 1.0;  // m = 1, so the bracket stays negative on [0, 1]
        const auto sched = no_therapy(p);
        const Grid grid(32, 1.0);
        RunConfig run;
        run.nx = 32;
        run.t_end = 12.0;
        run.ic = IcKind::Constant;
        run.ic_phi = 0.5;
        run.ic_sigma = 0.25;
        run.ic_p = 0.3;
        const State s = build_initial_state(grid, p, run);
        const auto traj = integrate(s, run, p, sched, grid);
        const auto r = check_phi_vanishes(traj, 1.0, 1e-6);
        REQUIRE(r.status == CheckStatus::Info);
        REQUIRE(r.detail.find("converged-elsewhere") != std::string::npos);
    }
    {
        // trivially settled: the zero phase is a fixed point
        const ModelParams p = fixture();
        const Grid grid(16, 1.0);
        RunConfig run;
        run.nx = 16;
        run.t_end = 6.0;
        run.ic = IcKind::Constant;
        run.ic_phi = 0.0;
        run.ic_sigma = 0.1;
        run.ic_p = 0.1;
        const State s = build_initial_state(grid, p, run);
        const auto traj = integrate(s, run, p, no_therapy(p), grid);
        const auto r = check_phi_vanishes(traj, 1.0, 1e-6);
        REQUIRE(r.detail.find("converged-to-zero") != std::string::npos);
    }
}

TEST_CASE("full report on the fixture passes and records the constants", "[analysis]") {
    const ModelParams p = fixture();
    const auto sched = no_therapy(p);
    const Grid grid(48, 1.0);
    const auto traj = run_fixture(grid, p, sched, 10.0, 11);
    RunConfig run;
    run.nx = 48;
    run.t_end = 10.0;
    run.seed = 11;
    const auto report = assemble_report(traj, grid, p, sched, run);
    REQUIRE(all_asserted_pass(report));
    REQUIRE(report.predicted.condition_met);
    REQUIRE(report.predicted.beta_predicted == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(report.predicted.sigma_tilde == 0.5);
    REQUIRE(report.predicted.absorbing.kappa == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(report.predicted.absorbing.C_bar == Catch::Approx(2.16).margin(1e-12));

    std::stringstream ss;
    write_report_csv(ss, report);
    const std::string text = ss.str();
    REQUIRE(text.find("beta_predicted,0.5") != std::string::npos);
    REQUIRE(text.find("generator,xoshiro256++") != std::string::npos);
    REQUIRE(text.find("check,phi_range,pass") != std::string::npos);
}
