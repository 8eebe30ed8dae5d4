#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "pca/config.hpp"
#include "pca/grid.hpp"
#include "pca/model.hpp"
#include "pca/steady.hpp"
#include "pca/stepper.hpp"

namespace pca {

// ---------------------------------------------------------------------------
// Predicted constants

/// Explicit decay rate from the coefficient condition; throws when the
/// condition fails, carrying the (negative) margin.
inline double predict_beta(const ModelParams& params, const TherapySchedule& schedule,
                           double lambda1_value, double f_sup) {
    const DecayCondition c = validate_decay_condition(params, schedule, lambda1_value, f_sup);
    if (!c.holds) throw ConditionNotMet(c.margin);
    return c.beta;
}

struct AbsorbingConstants {
    double kappa = 0.0;       // min(2 lambda lambda1, 2 gamma_h, gamma_p)
    double kappa_base = 0.0;  // min(2 gamma_h, gamma_p)
    double C_bar = 0.0;        // source budget of the energy inequality
    double C0 = 0.0;           // absorbing radius for the given initial energy
    double t0 = 0.0;           // entry time into the absorbing set
};

/// Constants of the energy inequality d/dt E + kappa E <= C_bar, with E the
/// squared L2 size of the state triple. The conservative kappa keeps only
/// damping terms that survive the gradient-to-L2 conversion on the phase.
inline AbsorbingConstants absorbing_constants(const ModelParams& p,
                                              const TherapySchedule& schedule,
                                              double lambda1_value, double omega_measure,
                                              double E_init) {
    AbsorbingConstants c;
    c.kappa_base = std::min(2.0 * p.gamma_h, p.gamma_p);
    c.kappa = std::min(2.0 * p.lambda * lambda1_value, c.kappa_base);
    const double st = sigma_tilde(p);
    const double f_sup = f_sup_bound(p, schedule);
    const double alpha_max = std::max(p.alpha_h, p.alpha_c);
    c.C_bar = 2.0 * omega_measure *
              (2.0 * f_sup + std::abs(p.gamma_ch()) * st * st +
               (p.S_h + p.S_c + schedule.s_sup) * st +
               alpha_max * alpha_max / (2.0 * p.gamma_p));
    const double tail = c.C_bar / c.kappa;
    c.t0 = E_init > tail ? std::log(E_init / tail) / c.kappa : 0.0;
    c.C0 = E_init * std::exp(-c.kappa * c.t0) + tail;
    return c;
}

// ---------------------------------------------------------------------------
// Decay-rate fitting

struct FitResult {
    double rate = 0.0;
    double residual = 0.0;  // RMS of the log-linear fit
};

inline constexpr double kSeriesFloor = 1e-14;

/// Least-squares slope of log E over [t_a, t_b], negated.
inline FitResult fit_decay_rate(const std::vector<std::pair<double, double>>& series,
                                double t_a, double t_b) {
    if (!(t_b > t_a)) throw WindowTooShort("fit window is empty");
    std::vector<double> ts, logs;
    for (const auto& [t, e] : series) {
        if (t < t_a || t > t_b) continue;
        if (e <= kSeriesFloor) throw SeriesUnderflow("series at or below floor inside window");
        ts.push_back(t);
        logs.push_back(std::log(e));
    }
    if (ts.size() < 2) throw WindowTooShort("fewer than two samples in window");

    const double n = static_cast<double>(ts.size());
    double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        st += ts[i];
        sl += logs[i];
        stt += ts[i] * ts[i];
        stl += ts[i] * logs[i];
    }
    const double denom = n * stt - st * st;
    if (denom == 0.0) throw WindowTooShort("degenerate fit window");
    const double slope = (n * stl - st * sl) / denom;
    const double intercept = (sl - slope * st) / n;
    double rss = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double r = logs[i] - (intercept + slope * ts[i]);
        rss += r * r;
    }
    return {-slope, std::sqrt(rss / n)};
}

/// Default window: second half of the run, truncated before the first
/// sample that underflows the floor.
inline std::pair<double, double> default_fit_window(
    const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 2) throw WindowTooShort("series has fewer than two samples");
    const double t_end = series.back().first;
    const double t_a = 0.5 * t_end;
    double t_b = t_a;
    bool any = false;
    for (const auto& [t, e] : series) {
        if (t < t_a) continue;
        if (e <= kSeriesFloor) break;
        t_b = t;
        any = true;
    }
    if (!any || !(t_b > t_a)) throw WindowTooShort("no usable samples past midpoint");
    return {t_a, t_b};
}

// ---------------------------------------------------------------------------
// Checks

enum class CheckStatus { Pass, Fail, Skip, Info };

inline const char* status_name(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::Skip: return "skip";
        default: return "info";
    }
}

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::Skip;
    bool asserted = false;  // contributes to the exit code
    double margin = 0.0;    // >= 0 means satisfied, sign carries meaning on fail
    std::string detail;
};

enum class PhiLimitVerdict { ConvergedToZero, ConvergedElsewhere, Undecided };

inline const char* verdict_name(PhiLimitVerdict v) {
    switch (v) {
        case PhiLimitVerdict::ConvergedToZero: return "converged-to-zero";
        case PhiLimitVerdict::ConvergedElsewhere: return "converged-elsewhere";
        default: return "undecided";
    }
}

/// Pointwise field bounds: phi in [0,1] always; sigma in [0, sigma_tilde]
/// and p >= 0 under their hypotheses on the data.
inline std::vector<CheckResult> check_bounds(const Trajectory& traj, double tau_bound) {
    std::vector<CheckResult> out;
    auto entry = [&](const char* name, bool applicable, double worst) {
        CheckResult r;
        r.name = name;
        r.asserted = applicable;
        if (!applicable) {
            r.status = CheckStatus::Skip;
            r.detail = "hypotheses on the data do not hold";
        } else {
            r.margin = tau_bound - worst;
            r.status = worst <= tau_bound ? CheckStatus::Pass : CheckStatus::Fail;
            r.detail = "worst excursion " + format_double(worst);
        }
        out.push_back(std::move(r));
    };
    entry("phi_range", true, traj.violations.max_phi);
    entry("sigma_range", traj.sigma_hypothesis, traj.violations.max_sigma);
    entry("psa_nonnegative", traj.p_hypothesis, traj.violations.max_p);
    return out;
}

/// Differential form and Gronwall form of the absorbing-set estimate,
/// evaluated on the logged samples.
inline std::vector<CheckResult> check_absorbing(const Trajectory& traj,
                                                const AbsorbingConstants& c) {
    std::vector<CheckResult> out;
    const auto& s = traj.series;
    const double slack = 1e-9 * std::max(1.0, c.C_bar);

    CheckResult diff;
    diff.name = "energy_dissipation";
    diff.asserted = true;
    if (s.size() < 2) {
        diff.status = CheckStatus::Skip;
        diff.detail = "needs at least two samples";
        diff.asserted = false;
    } else {
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k + 1 < s.size(); ++k) {
            const double dt = s[k + 1].t - s[k].t;
            if (!(dt > 0.0)) continue;
            const double slope = (s[k + 1].e_hat() - s[k].e_hat()) / dt;
            const double e_min = std::min(s[k].e_hat(), s[k + 1].e_hat());
            worst = std::min(worst, c.C_bar - (slope + c.kappa * e_min));
        }
        diff.margin = worst;
        diff.status = worst >= -slack ? CheckStatus::Pass : CheckStatus::Fail;
        diff.detail = "min margin of C_bar - (dE/dt + kappa E)";
    }
    out.push_back(std::move(diff));

    CheckResult point;
    point.name = "energy_absorbing";
    point.asserted = true;
    if (s.empty()) {
        point.status = CheckStatus::Skip;
        point.asserted = false;
    } else {
        const double e0 = s.front().e_hat();
        double worst = std::numeric_limits<double>::infinity();
        for (const auto& row : s) {
            const double bound = e0 * std::exp(-c.kappa * row.t) + c.C_bar / c.kappa;
            worst = std::min(worst, bound - row.e_hat());
        }
        point.margin = worst;
        point.status = worst >= -slack ? CheckStatus::Pass : CheckStatus::Fail;
        point.detail = "min margin of E(0)e^{-kappa t} + C_bar/kappa - E(t)";
    }
    out.push_back(std::move(point));
    return out;
}

struct H1CheckResult {
    CheckResult check;
    double empirical_c1 = 0.0;
    double eventual_c1 = 0.0;
    std::vector<double> window_maxima;
};

inline constexpr double kH1TailSlack = 0.05;

/// Windowed maxima of the combined H1 norm for t >= t0 + 1 must be finite
/// and settled in the tail: the last half of the windows may spread by at
/// most 5%. Components can cross (the phase part undershoots while the
/// nutrient part still rises), so the maxima may dip and recover; what the
/// check forbids is drift at the end of the run.
inline H1CheckResult check_h1_bound(const Trajectory& traj, double t0) {
    const double t1 = t0 + 1.0;
    const auto& s = traj.series;
    if (s.empty() || s.back().t < t0 + 2.0) throw RunTooShort("need t_end >= t0 + 2");

    H1CheckResult out;
    const double t_end = s.back().t;
    for (double lo = t1; lo < t_end - 1e-12; lo += 1.0) {
        const double hi = lo + 1.0;
        double m = 0.0;
        bool any = false;
        for (const auto& row : s) {
            const bool last_window = hi >= t_end - 1e-12;
            if (row.t + 1e-12 < lo || row.t > hi + (last_window ? 1e-12 : -1e-12)) continue;
            m = std::max(m, row.h1_total());
            any = true;
        }
        if (any) out.window_maxima.push_back(m);
    }
    CheckResult r;
    r.name = "h1_bounded";
    r.asserted = true;
    if (out.window_maxima.empty()) throw RunTooShort("no complete windows past t0 + 1");

    const auto& m = out.window_maxima;
    bool finite = true;
    for (double value : m) finite = finite && std::isfinite(value);
    out.empirical_c1 = *std::max_element(m.begin(), m.end());
    out.eventual_c1 = m.back();

    double margin = 0.0;
    if (m.size() > 1) {
        const std::size_t half = m.size() / 2;
        const double tail_max = *std::max_element(m.begin() + half, m.end());
        const double tail_min = *std::min_element(m.begin() + half, m.end());
        const double spread = tail_max > 0.0 ? (tail_max - tail_min) / tail_max : 0.0;
        margin = kH1TailSlack - spread;
    }
    r.margin = margin;
    r.status = finite && r.margin >= 0.0 ? CheckStatus::Pass : CheckStatus::Fail;
    r.detail = "empirical C1 " + format_double(out.empirical_c1) + ", eventual " +
               format_double(out.eventual_c1);
    out.check = std::move(r);
    return out;
}

/// Unit-window sums of ||dphi/dt||^2 dt: bounded, and non-increasing once
/// past their peak.
inline CheckResult check_phi_rate_windows(const Trajectory& traj) {
    CheckResult r;
    r.name = "phi_rate_windows";
    const auto& w = traj.phi_rate_windows;
    if (w.size() < 2) {
        r.status = CheckStatus::Skip;
        r.detail = "needs at least two unit windows";
        return r;
    }
    r.asserted = true;
    const double w_max = *std::max_element(w.begin(), w.end());
    const std::size_t peak =
        static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    const double floor_slack = 1e-15 * std::max(1.0, w_max);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = peak + 1; k < w.size(); ++k)
        worst = std::min(worst, w[k - 1] * 1.01 + floor_slack - w[k]);
    r.margin = peak + 1 < w.size() ? worst : 0.0;
    r.status = std::isfinite(w_max) && r.margin >= 0.0 ? CheckStatus::Pass : CheckStatus::Fail;
    r.detail = "peak window " + format_double(w_max) + ", last " + format_double(w.back());
    return r;
}

struct DecayCheckResult {
    CheckResult check;
    std::optional<FitResult> fit_e;
    std::optional<FitResult> fit_phi;
};

/// Pointwise exponential envelope E(t) <= E(0) e^{-beta t} and a fitted
/// log-linear rate at least beta, both only when the coefficient condition
/// holds. The tiny absolute floor keeps solver noise on exactly-stationary
/// data from registering as a violation.
inline DecayCheckResult check_exponential_decay(const Trajectory& traj,
                                                const DecayCondition& condition) {
    DecayCheckResult out;
    CheckResult r;
    r.name = "exp_decay";
    const auto& s = traj.series;

    std::vector<std::pair<double, double>> e_series, phi_series;
    for (const auto& row : s) {
        e_series.emplace_back(row.t, row.e_dev);
        phi_series.emplace_back(row.t, row.l2_phi * row.l2_phi);
    }
    try {
        const auto [ta, tb] = default_fit_window(e_series);
        out.fit_e = fit_decay_rate(e_series, ta, tb);
    } catch (const std::exception&) {}
    try {
        const auto [ta, tb] = default_fit_window(phi_series);
        out.fit_phi = fit_decay_rate(phi_series, ta, tb);
    } catch (const std::exception&) {}

    if (!condition.holds) {
        r.status = CheckStatus::Skip;
        r.detail = "coefficient condition fails, margin " + format_double(condition.margin);
        out.check = std::move(r);
        return out;
    }
    if (s.empty()) {
        r.status = CheckStatus::Skip;
        r.detail = "empty series";
        out.check = std::move(r);
        return out;
    }
    r.asserted = true;
    const double beta = condition.beta;
    const double e0 = s.front().e_dev;
    double worst_rel = std::numeric_limits<double>::infinity();
    for (const auto& row : s) {
        const double bound = e0 * std::exp(-beta * row.t) * (1.0 + 1e-6) + 1e-18;
        worst_rel = std::min(worst_rel, (bound - row.e_dev) / std::max(bound, 1e-300));
    }
    bool ok = worst_rel >= 0.0;
    std::string detail = "pointwise envelope margin " + format_double(worst_rel);
    if (out.fit_e) {
        const double rate_margin = out.fit_e->rate - (beta - 1e-3);
        ok = ok && rate_margin >= 0.0;
        detail += ", fitted rate " + format_double(out.fit_e->rate);
        worst_rel = std::min(worst_rel, rate_margin);
    } else {
        detail += ", fit window unavailable";
    }
    r.margin = worst_rel;
    r.status = ok ? CheckStatus::Pass : CheckStatus::Fail;
    r.detail = std::move(detail);
    out.check = std::move(r);
    return out;
}

/// Three-valued long-time verdict for the phase field; informational only.
inline CheckResult check_phi_vanishes(const Trajectory& traj, double kappa,
                                      double eps_conv) {
    CheckResult r;
    r.name = "phi_limit";
    r.status = CheckStatus::Info;
    const auto& s = traj.series;
    if (s.empty() || s.back().t < 5.0 / kappa) {
        r.detail = verdict_name(PhiLimitVerdict::Undecided);
        r.detail += " (run shorter than 5/kappa)";
        return r;
    }
    const double phi_end = s.back().l2_phi;
    if (phi_end <= eps_conv) {
        r.detail = verdict_name(PhiLimitVerdict::ConvergedToZero);
        r.margin = eps_conv - phi_end;
        return r;
    }
    const auto& w = traj.phi_rate_windows;
    bool settled = false;
    if (w.size() >= 2) {
        const double first = std::max(w.front(), 1e-12);
        settled = w.back() <= 1e-10 * first || w.back() <= 1e-14;
    }
    r.detail = verdict_name(settled ? PhiLimitVerdict::ConvergedElsewhere
                                    : PhiLimitVerdict::Undecided);
    r.detail += ", final phase norm " + format_double(phi_end);
    return r;
}

// ---------------------------------------------------------------------------
// Full report

struct PredictedConstants {
    double sigma_tilde = 0.0;
    double lambda1 = 0.0;
    double f_sup = 0.0;
    bool condition_met = false;
    double condition_margin = 0.0;
    double beta_predicted = 0.0;  // meaningful when condition_met
    AbsorbingConstants absorbing;
};

struct RunReport {
    std::vector<SampleRow> series;
    PredictedConstants predicted;
    std::optional<FitResult> fit_e;
    std::optional<FitResult> fit_phi;
    std::vector<CheckResult> checks;
    ViolationSummary violations;
    bool sigma_hypothesis = false;
    bool p_hypothesis = false;
    bool conforming = true;
    std::uint64_t seed = 0;
    double dt = 0.0;
    long n_steps = 0;
};

inline bool all_asserted_pass(const RunReport& report) {
    for (const auto& c : report.checks)
        if (c.asserted && c.status == CheckStatus::Fail) return false;
    return true;
}

/// Run every check against a finished trajectory. Steady-route agreement is
/// included so a verify pass exercises the stationary solvers too.
inline RunReport assemble_report(const Trajectory& traj, const Grid& grid,
                                 const ModelParams& params, const TherapySchedule& schedule,
                                 const RunConfig& run) {
    RunReport report;
    report.series = traj.series;
    report.violations = traj.violations;
    report.sigma_hypothesis = traj.sigma_hypothesis;
    report.p_hypothesis = traj.p_hypothesis;
    report.conforming = traj.conforming;
    report.seed = run.seed;
    report.dt = traj.dt;
    report.n_steps = traj.n_steps;

    auto& pred = report.predicted;
    pred.sigma_tilde = sigma_tilde(params);
    pred.lambda1 = lambda1(grid);
    pred.f_sup = f_sup_bound(params, schedule);
    const DecayCondition condition =
        validate_decay_condition(params, schedule, pred.lambda1, pred.f_sup);
    pred.condition_met = condition.holds;
    pred.condition_margin = condition.margin;
    pred.beta_predicted = condition.beta;
    const double e_init = traj.series.empty() ? 0.0 : traj.series.front().e_hat();
    pred.absorbing =
        absorbing_constants(params, schedule, pred.lambda1, grid.measure(), e_init);

    for (auto& c : check_bounds(traj, run.tau_bound)) report.checks.push_back(std::move(c));
    for (auto& c : check_absorbing(traj, pred.absorbing))
        report.checks.push_back(std::move(c));

    try {
        auto h1 = check_h1_bound(traj, pred.absorbing.t0);
        report.checks.push_back(std::move(h1.check));
    } catch (const RunTooShort& e) {
        CheckResult r;
        r.name = "h1_bounded";
        r.status = CheckStatus::Skip;
        r.detail = e.what();
        report.checks.push_back(std::move(r));
    }

    report.checks.push_back(check_phi_rate_windows(traj));

    auto decay = check_exponential_decay(traj, condition);
    report.fit_e = decay.fit_e;
    report.fit_phi = decay.fit_phi;
    report.checks.push_back(std::move(decay.check));

    report.checks.push_back(
        check_phi_vanishes(traj, pred.absorbing.kappa, run.eps_conv));

    {
        CheckResult r;
        r.name = "steady_agreement";
        r.asserted = true;
        const auto [steady, agreement] = steady_triple_agreement(grid, params);
        (void)steady;
        r.margin = 1e-8 - agreement.max_pairwise();
        r.status = r.margin >= 0.0 ? CheckStatus::Pass : CheckStatus::Fail;
        r.detail = "max pairwise L2 distance " + format_double(agreement.max_pairwise());
        report.checks.push_back(std::move(r));
    }

    if (!traj.conforming)
        for (auto& c : report.checks)
            if (c.asserted) c.detail += " [non-conforming: clamped run]";
    return report;
}

inline void write_report_csv(std::ostream& os, const RunReport& report) {
    os << "kind,name,value,detail\n";
    auto row = [&](const char* kind, const std::string& name, const std::string& value,
                   const std::string& detail = "") {
        os << kind << ',' << name << ',' << value << ',' << detail << '\n';
    };
    row("const", "generator", Xoshiro256pp::name);
    row("const", "seed", std::to_string(report.seed));
    row("const", "dt", format_double(report.dt));
    row("const", "n_steps", std::to_string(report.n_steps));
    row("const", "conforming", report.conforming ? "true" : "false");
    row("const", "sigma_tilde", format_double(report.predicted.sigma_tilde));
    row("const", "lambda1", format_double(report.predicted.lambda1));
    row("const", "f_sup", format_double(report.predicted.f_sup), "source=apriori_box");
    row("const", "condition_met", report.predicted.condition_met ? "true" : "false",
        "margin=" + format_double(report.predicted.condition_margin));
    if (report.predicted.condition_met)
        row("const", "beta_predicted", format_double(report.predicted.beta_predicted));
    row("const", "kappa", format_double(report.predicted.absorbing.kappa));
    row("const", "kappa_base", format_double(report.predicted.absorbing.kappa_base));
    row("const", "C_bar", format_double(report.predicted.absorbing.C_bar));
    row("const", "C0", format_double(report.predicted.absorbing.C0));
    row("const", "t0", format_double(report.predicted.absorbing.t0));
    if (report.fit_e)
        row("fit", "decay_rate_E", format_double(report.fit_e->rate),
            "residual=" + format_double(report.fit_e->residual));
    if (report.fit_phi)
        row("fit", "decay_rate_phi", format_double(report.fit_phi->rate),
            "residual=" + format_double(report.fit_phi->residual));
    row("violation", "max_phi", format_double(report.violations.max_phi));
    if (report.sigma_hypothesis)
        row("violation", "max_sigma", format_double(report.violations.max_sigma));
    if (report.p_hypothesis)
        row("violation", "max_p", format_double(report.violations.max_p));
    row("violation", "steps_beyond_tau", std::to_string(report.violations.count));
    for (const auto& c : report.checks) {
        std::string detail = "margin=" + format_double(c.margin);
        if (!c.detail.empty()) detail += "; " + c.detail;
        row(c.status == CheckStatus::Info ? "info" : "check", c.name,
            status_name(c.status), detail);
    }
}

inline void print_verdict_table(std::ostream& os, const RunReport& report) {
    os << "check                 status  margin\n";
    for (const auto& c : report.checks) {
        os << c.name;
        for (std::size_t i = c.name.size(); i < 22; ++i) os << ' ';
        os << status_name(c.status);
        for (std::size_t i = std::string(status_name(c.status)).size(); i < 8; ++i) os << ' ';
        os << format_double(c.margin);
        if (!c.detail.empty()) os << "  (" << c.detail << ')';
        os << '\n';
    }
    os << (all_asserted_pass(report) ? "RESULT: all asserted checks pass\n"
                                     : "RESULT: asserted check failure\n");
}

}  // namespace pca
