#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "pca/config.hpp"
#include "pca/grid.hpp"
#include "pca/model.hpp"
#include "pca/rng.hpp"

namespace pca {

/// Invariant nutrient ceiling max(S_h/gamma_h, S_c/gamma_c).
inline double sigma_tilde(const ModelParams& p) {
    return std::max(p.S_h / p.gamma_h, p.S_c / p.gamma_c);
}

/// Explicit-reaction stability budget. Heuristic, recorded in diagnostics:
/// keeps the monitored field bounds within 1e-8 slack for admissible data.
inline double dt_max_rule(const ModelParams& p, const TherapySchedule& schedule) {
    return 1.0 / (2.0 * f_sup_bound(p, schedule) +
                  std::abs(p.gamma_ch()) * sigma_tilde(p) + 1.0);
}

struct State {
    double t = 0.0;
    Field phi;    // Dirichlet layout
    Field sigma;  // Neumann layout
    Field p;      // Neumann layout
};

inline State make_state(const Grid& grid, double phi0 = 0.0, double sigma0 = 0.0,
                        double p0 = 0.0) {
    State s;
    s.phi = make_field(grid, BcKind::Dirichlet0, phi0);
    s.sigma = make_field(grid, BcKind::Neumann0, sigma0);
    s.p = make_field(grid, BcKind::Neumann0, p0);
    return s;
}

struct BoundViolation {
    std::string field;
    double t = 0.0;
    std::size_t node = 0;
    double magnitude = 0.0;
};

struct StepDiagnostics {
    double dt = 0.0;
    int iterations[3] = {0, 0, 0};       // phi, sigma, p solves
    double residuals[3] = {0.0, 0.0, 0.0};
    FieldRange phi_range, sigma_range, p_range;
};

inline constexpr double kStepSolveTol = 1e-11;

/// One IMEX Euler step: implicit diffusion and linear decay, explicit
/// nonlinear coupling. Each solve is linear and positive definite.
inline std::pair<State, StepDiagnostics> step(const State& state, double dt,
                                              const ModelParams& params,
                                              const TherapySchedule& schedule,
                                              const Grid& grid) {
    const double dt_cap = dt_max_rule(params, schedule);
    if (dt > dt_cap * (1.0 + 1e-9)) throw CflViolation(dt, dt_cap);

    const StateView view{state.phi, state.sigma, state.p};
    const ReactionEval rhs = reactions(grid, view, state.t, params, schedule);

    State next;
    next.t = state.t + dt;
    StepDiagnostics diag;
    diag.dt = dt;

    // (I - dt lambda Lap) phi' = phi + dt * r_phi
    Field b = state.phi;
    for (std::size_t k = 0; k < b.v.size(); ++k) b.v[k] += dt * rhs.r_phi.v[k];
    next.phi = state.phi;
    auto st = solve_helmholtz(grid, 1.0, dt * params.lambda, b, next.phi, kStepSolveTol);
    diag.iterations[0] = st.iterations;
    diag.residuals[0] = st.rel_residual;

    // (I + dt gamma_h - dt eta Lap) sigma' = sigma + dt * (r_sigma + gamma_h sigma)
    b = state.sigma;
    for (std::size_t k = 0; k < b.v.size(); ++k)
        b.v[k] += dt * (rhs.r_sigma.v[k] + params.gamma_h * state.sigma.v[k]);
    next.sigma = state.sigma;
    st = solve_helmholtz(grid, 1.0 + dt * params.gamma_h, dt * params.eta, b, next.sigma,
                         kStepSolveTol);
    diag.iterations[1] = st.iterations;
    diag.residuals[1] = st.rel_residual;

    // (I + dt gamma_p - dt D Lap) p' = p + dt * (r_p + gamma_p p)
    b = state.p;
    for (std::size_t k = 0; k < b.v.size(); ++k)
        b.v[k] += dt * (rhs.r_p.v[k] + params.gamma_p * state.p.v[k]);
    next.p = state.p;
    st = solve_helmholtz(grid, 1.0 + dt * params.gamma_p, dt * params.D, b, next.p,
                         kStepSolveTol);
    diag.iterations[2] = st.iterations;
    diag.residuals[2] = st.rel_residual;

    diag.phi_range = field_range(next.phi);
    diag.sigma_range = field_range(next.sigma);
    diag.p_range = field_range(next.p);
    return {std::move(next), diag};
}

// ---------------------------------------------------------------------------
// Initial conditions

inline State build_initial_state(const Grid& grid, const ModelParams& params,
                                 const RunConfig& run) {
    const double sig_ref = run.ic_sigma.value_or(sigma_tilde(params));
    const double p_ref = run.ic_p.value_or(2.0 * params.p_infinity());

    State state = make_state(grid);
    switch (run.ic) {
        case IcKind::Constant: {
            std::fill(state.phi.v.begin(), state.phi.v.end(), run.ic_phi);
            std::fill(state.sigma.v.begin(), state.sigma.v.end(), sig_ref);
            std::fill(state.p.v.begin(), state.p.v.end(), p_ref);
            break;
        }
        case IcKind::Bump: {
            // Smooth product-of-sines bump for the phase, constants elsewhere.
            const int nx = grid.n[0];
            for (std::size_t k = 0; k < state.phi.v.size(); ++k) {
                const int i = static_cast<int>(k) % nx;
                double value = std::sin(std::numbers::pi * (i + 1) / (nx + 1));
                if (grid.dim == 2) {
                    const int j = static_cast<int>(k) / nx;
                    value *= std::sin(std::numbers::pi * (j + 1) / (grid.n[1] + 1));
                }
                state.phi.v[k] = run.ic_phi * value;
            }
            std::fill(state.sigma.v.begin(), state.sigma.v.end(), sig_ref);
            std::fill(state.p.v.begin(), state.p.v.end(), p_ref);
            break;
        }
        case IcKind::Random: {
            Xoshiro256pp rng(run.seed);
            for (auto& value : state.phi.v) value = rng.uniform(0.0, run.ic_phi);
            for (auto& value : state.sigma.v) value = rng.uniform(0.0, sig_ref);
            for (auto& value : state.p.v) value = rng.uniform(0.0, p_ref);
            break;
        }
    }

    const auto phi_r = field_range(state.phi);
    if (phi_r.min_value < 0.0 || phi_r.max_value > 1.0)
        throw InvalidInitialState("phase initial data must lie in [0, 1]");
    return state;
}

// ---------------------------------------------------------------------------
// Time series

struct SampleRow {
    double t = 0.0;
    double l2_phi = 0.0, l2_sigma = 0.0, l2_p = 0.0;
    double h1_phi = 0.0, h1_sigma = 0.0, h1_p = 0.0;
    double min_phi = 0.0, max_phi = 0.0;
    double min_sigma = 0.0, max_sigma = 0.0;
    double min_p = 0.0;
    double e_dev = 0.0;  // ||phi||^2 + ||sigma - sigma_inf||^2 + ||p - p_inf||^2

    /// Squared distance from the zero state, used by the absorbing estimates.
    double e_hat() const { return l2_phi * l2_phi + l2_sigma * l2_sigma + l2_p * l2_p; }
    double h1_total() const {
        return std::sqrt(h1_phi * h1_phi + h1_sigma * h1_sigma + h1_p * h1_p);
    }
};

inline SampleRow sample_state(const Grid& grid, const State& state,
                              const ModelParams& params) {
    SampleRow row;
    row.t = state.t;
    row.l2_phi = norm_l2(grid, state.phi);
    row.l2_sigma = norm_l2(grid, state.sigma);
    row.l2_p = norm_l2(grid, state.p);
    row.h1_phi = norm_h1(grid, state.phi);
    row.h1_sigma = norm_h1(grid, state.sigma);
    row.h1_p = norm_h1(grid, state.p);
    const auto phi_r = field_range(state.phi);
    const auto sigma_r = field_range(state.sigma);
    const auto p_r = field_range(state.p);
    row.min_phi = phi_r.min_value;
    row.max_phi = phi_r.max_value;
    row.min_sigma = sigma_r.min_value;
    row.max_sigma = sigma_r.max_value;
    row.min_p = p_r.min_value;

    Field dev = state.sigma;
    const double sigma_inf = params.sigma_infinity();
    for (auto& value : dev.v) value -= sigma_inf;
    const double y = norm_l2(grid, dev);
    dev = state.p;
    const double p_inf = params.p_infinity();
    for (auto& value : dev.v) value -= p_inf;
    const double z = norm_l2(grid, dev);
    row.e_dev = row.l2_phi * row.l2_phi + y * y + z * z;
    return row;
}

struct ViolationSummary {
    double max_phi = 0.0;    // worst distance of phi outside [0, 1]
    double max_sigma = 0.0;  // worst distance of sigma outside [0, sigma_tilde]
    double max_p = 0.0;      // worst distance of p below 0
    std::size_t count = 0;   // monitored excursions beyond tau_bound
    std::vector<BoundViolation> worst;  // one entry per field, if any
};

struct Trajectory {
    std::vector<SampleRow> series;
    ViolationSummary violations;
    // Near-unit windows of round(1/dt) steps each: sum of ||dphi/dt||^2 dt.
    // Equal step counts per window keep the sums comparable.
    std::vector<double> phi_rate_windows;
    double phi_rate_window_length = 0.0;
    bool sigma_hypothesis = false;  // 0 <= sigma_0 <= sigma_tilde and s <= S_c held
    bool p_hypothesis = false;      // p_0 >= 0 and s <= S_c held
    bool clamped = false;
    bool conforming = true;
    double dt = 0.0;
    long n_steps = 0;
    int max_solver_iterations = 0;
    double max_solver_residual = 0.0;
};

/// Resolve the number of steps and the actual dt for a run. When the
/// configured dt is 0 the stability rule chooses it, rounded so the output
/// cadence divides the step count exactly.
inline std::pair<long, double> resolve_steps(const RunConfig& run, const ModelParams& params,
                                             const TherapySchedule& schedule) {
    if (run.t_end <= 0.0) return {0, 0.0};
    if (run.dt > 0.0) {
        const long steps = std::lround(run.t_end / run.dt);
        return {steps, run.dt};
    }
    const double cap = dt_max_rule(params, schedule);
    long steps = static_cast<long>(std::ceil(run.t_end / cap - 1e-12));
    steps = std::max<long>(steps, 1);
    while (run.t_end / static_cast<double>(steps) > cap * (1.0 + 1e-12)) ++steps;
    const long cadence = run.output_every;
    steps = ((steps + cadence - 1) / cadence) * cadence;
    return {steps, run.t_end / static_cast<double>(steps)};
}

using SampleSink = std::function<void(const SampleRow&, const State&)>;

/// Advance the system to t_end, sampling at the configured cadence and
/// monitoring the field bounds at every step. Never clamps unless asked;
/// a clamped run is marked non-conforming.
inline Trajectory integrate(State state, const RunConfig& run, const ModelParams& params,
                            const TherapySchedule& schedule, const Grid& grid,
                            const SampleSink& sink = {}, bool clamp = false) {
    require_layout(grid, state.phi);
    require_layout(grid, state.sigma);
    require_layout(grid, state.p);
    {
        const auto r = field_range(state.phi);
        if (r.min_value < 0.0 || r.max_value > 1.0)
            throw InvalidInitialState("phase initial data must lie in [0, 1]");
    }

    const double s_tilde = sigma_tilde(params);
    const auto sigma0_r = field_range(state.sigma);
    const auto p0_r = field_range(state.p);

    Trajectory traj;
    traj.sigma_hypothesis =
        schedule.s_le_Sc && sigma0_r.min_value >= 0.0 && sigma0_r.max_value <= s_tilde;
    traj.p_hypothesis = schedule.s_le_Sc && p0_r.min_value >= 0.0;
    traj.clamped = clamp;
    traj.conforming = !clamp;

    auto [n_steps, dt] = resolve_steps(run, params, schedule);
    traj.n_steps = n_steps;
    traj.dt = dt;

    auto record = [&](const State& s) {
        SampleRow row = sample_state(grid, s, params);
        traj.series.push_back(row);
        if (sink) sink(row, s);
    };
    record(state);

    auto monitor = [&](const StepDiagnostics& diag, double t) {
        auto note = [&](const char* name, double magnitude, std::size_t node, double& worst) {
            if (magnitude <= 0.0) return;
            if (magnitude > worst) {
                worst = magnitude;
                auto it = std::find_if(traj.violations.worst.begin(),
                                       traj.violations.worst.end(),
                                       [&](const BoundViolation& v) { return v.field == name; });
                if (it == traj.violations.worst.end())
                    traj.violations.worst.push_back({name, t, node, magnitude});
                else
                    *it = {name, t, node, magnitude};
            }
            if (magnitude > run.tau_bound) ++traj.violations.count;
        };
        note("phi", std::max(-diag.phi_range.min_value, diag.phi_range.max_value - 1.0),
             diag.phi_range.min_value < 0.0 ? diag.phi_range.argmin : diag.phi_range.argmax,
             traj.violations.max_phi);
        if (traj.sigma_hypothesis)
            note("sigma",
                 std::max(-diag.sigma_range.min_value, diag.sigma_range.max_value - s_tilde),
                 diag.sigma_range.min_value < 0.0 ? diag.sigma_range.argmin
                                                  : diag.sigma_range.argmax,
                 traj.violations.max_sigma);
        if (traj.p_hypothesis)
            note("p", -diag.p_range.min_value, diag.p_range.argmin, traj.violations.max_p);
    };

    Field phi_prev = state.phi;
    double window_acc = 0.0;
    long window_fill = 0;
    const long window_steps = n_steps > 0 ? std::max<long>(1, std::lround(1.0 / dt)) : 1;
    traj.phi_rate_window_length = static_cast<double>(window_steps) * dt;

    for (long k = 1; k <= n_steps; ++k) {
        phi_prev = state.phi;
        auto [next, diag] = step(state, dt, params, schedule, grid);
        state = std::move(next);

        monitor(diag, state.t);  // violations are measured before any clamping
        if (clamp) {
            for (auto& value : state.phi.v) value = std::clamp(value, 0.0, 1.0);
            if (traj.sigma_hypothesis)
                for (auto& value : state.sigma.v) value = std::clamp(value, 0.0, s_tilde);
            if (traj.p_hypothesis)
                for (auto& value : state.p.v) value = std::max(value, 0.0);
        }
        traj.max_solver_iterations =
            std::max({traj.max_solver_iterations, diag.iterations[0], diag.iterations[1],
                      diag.iterations[2]});
        traj.max_solver_residual =
            std::max({traj.max_solver_residual, diag.residuals[0], diag.residuals[1],
                      diag.residuals[2]});

        {
            Field diff = state.phi;
            for (std::size_t i = 0; i < diff.v.size(); ++i) diff.v[i] -= phi_prev.v[i];
            const double nrm = norm_l2(grid, diff);
            window_acc += nrm * nrm / dt;
        }
        if (++window_fill == window_steps) {
            traj.phi_rate_windows.push_back(window_acc);
            window_acc = 0.0;
            window_fill = 0;
        }

        if (k % run.output_every == 0) record(state);
    }
    // trailing partial window dropped

    return traj;
}

// ---------------------------------------------------------------------------
// Time-series CSV

inline const char* series_csv_header() {
    return "t,L2_phi,L2_sigma,L2_p,H1_phi,H1_sigma,H1_p,min_phi,max_phi,min_sigma,"
           "max_sigma,min_p,E_dev";
}

inline void append_series_row(std::ostream& os, const SampleRow& r) {
    os << format_double(r.t) << ',' << format_double(r.l2_phi) << ','
       << format_double(r.l2_sigma) << ',' << format_double(r.l2_p) << ','
       << format_double(r.h1_phi) << ',' << format_double(r.h1_sigma) << ','
       << format_double(r.h1_p) << ',' << format_double(r.min_phi) << ','
       << format_double(r.max_phi) << ',' << format_double(r.min_sigma) << ','
       << format_double(r.max_sigma) << ',' << format_double(r.min_p) << ','
       << format_double(r.e_dev) << '\n';
}

inline void write_series_csv(std::ostream& os, const std::vector<SampleRow>& series) {
    os << series_csv_header() << '\n';
    for (const auto& row : series) append_series_row(os, row);
}

inline std::vector<SampleRow> read_series_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != series_csv_header())
        throw std::runtime_error("unexpected series header: " + line);
    std::vector<SampleRow> series;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 13) throw std::runtime_error("bad series row: " + line);
        SampleRow r;
        r.t = parse_double(cells[0]);
        r.l2_phi = parse_double(cells[1]);
        r.l2_sigma = parse_double(cells[2]);
        r.l2_p = parse_double(cells[3]);
        r.h1_phi = parse_double(cells[4]);
        r.h1_sigma = parse_double(cells[5]);
        r.h1_p = parse_double(cells[6]);
        r.min_phi = parse_double(cells[7]);
        r.max_phi = parse_double(cells[8]);
        r.min_sigma = parse_double(cells[9]);
        r.max_sigma = parse_double(cells[10]);
        r.min_p = parse_double(cells[11]);
        r.e_dev = parse_double(cells[12]);
        series.push_back(r);
    }
    return series;
}

}  // namespace pca
