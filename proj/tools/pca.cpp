#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pca/pca.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitSolverError = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    bool clamp = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_clamp = true) {
    cmd->add_option("--config", args.config_path, "configuration file")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--set", args.overrides, "override key=value (repeatable)");
    cmd->add_option("--seed", args.seed, "override the run seed");
    if (with_clamp)
        cmd->add_flag("--clamp", args.clamp,
                      "clamp fields to their bounds (marks the run non-conforming)");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pca::ConfigError::bad_value("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

pca::LoadedConfig load(const CommonArgs& args) {
    auto cfg = pca::load_config(read_text_file(args.config_path), args.overrides);
    if (args.seed) cfg.run.seed = *args.seed;
    return cfg;
}

pca::Grid make_grid(const pca::RunConfig& run) {
    return run.dim == 1 ? pca::Grid(run.nx, run.lx)
                        : pca::Grid(run.nx, run.ny, run.lx, run.ly);
}

struct RunOutput {
    pca::Trajectory trajectory;
    pca::Grid grid;
};

/// Integrate one configured run, streaming series.csv and snapshots.
RunOutput run_simulation(const pca::LoadedConfig& cfg, const fs::path& out_dir, bool clamp) {
    fs::create_directories(out_dir);
    const pca::Grid grid = make_grid(cfg.run);
    pca::State initial = pca::build_initial_state(grid, cfg.params, cfg.run);

    std::ofstream series(out_dir / "series.csv");
    if (!series) throw std::runtime_error("cannot open series.csv for writing");
    series << pca::series_csv_header() << '\n';

    fs::path snap_dir = out_dir / "snapshots";
    if (cfg.run.snapshots) fs::create_directories(snap_dir);

    long sample_index = 0;
    auto sink = [&](const pca::SampleRow& row, const pca::State& state) {
        pca::append_series_row(series, row);
        if (cfg.run.snapshots) {
            char tag[16];
            std::snprintf(tag, sizeof(tag), "%06ld", sample_index);
            pca::write_snapshot((snap_dir / ("phi_" + std::string(tag) + ".txt")).string(),
                                grid, state.phi);
            pca::write_snapshot((snap_dir / ("sigma_" + std::string(tag) + ".txt")).string(),
                                grid, state.sigma);
            pca::write_snapshot((snap_dir / ("p_" + std::string(tag) + ".txt")).string(),
                                grid, state.p);
        }
        ++sample_index;
    };

    RunOutput out{pca::integrate(std::move(initial), cfg.run, cfg.params, cfg.schedule, grid,
                                 sink, clamp),
                  grid};
    return out;
}

int cmd_simulate(const CommonArgs& args) {
    const auto cfg = load(args);
    const auto out = run_simulation(cfg, args.out_dir, args.clamp);
    std::cout << "wrote " << (fs::path(args.out_dir) / "series.csv").string() << " ("
              << out.trajectory.series.size() << " samples, dt "
              << pca::format_double(out.trajectory.dt) << ")\n";
    return kExitOk;
}

int cmd_verify(const CommonArgs& args) {
    const auto cfg = load(args);
    const auto out = run_simulation(cfg, args.out_dir, args.clamp);
    const pca::RunReport report =
        pca::assemble_report(out.trajectory, out.grid, cfg.params, cfg.schedule, cfg.run);
    std::ofstream rep(fs::path(args.out_dir) / "report.csv");
    pca::write_report_csv(rep, report);
    pca::print_verdict_table(std::cout, report);
    return pca::all_asserted_pass(report) ? kExitOk : kExitCheckFailed;
}

int cmd_steady(const CommonArgs& args) {
    const auto cfg = load(args);
    const pca::Grid grid = make_grid(cfg.run);
    const auto [closed, agreement] = pca::steady_triple_agreement(grid, cfg.params);
    std::ostringstream csv;
    csv << "name,value\n";
    csv << "sigma_inf," << pca::format_double(cfg.params.sigma_infinity()) << '\n';
    csv << "p_inf," << pca::format_double(cfg.params.p_infinity()) << '\n';
    csv << "gamma_value," << pca::format_double(closed.gamma_value) << '\n';
    csv << "closed_vs_discrete," << pca::format_double(agreement.closed_vs_discrete) << '\n';
    csv << "closed_vs_minimize," << pca::format_double(agreement.closed_vs_minimize) << '\n';
    csv << "discrete_vs_minimize," << pca::format_double(agreement.discrete_vs_minimize)
        << '\n';
    csv << "note,quadratic energy is coercive for all positive coefficients; no extra "
           "smallness condition imposed\n";
    std::cout << csv.str();
    if (!args.out_dir.empty()) {
        fs::create_directories(args.out_dir);
        std::ofstream f(fs::path(args.out_dir) / "steady.csv");
        f << csv.str();
    }
    return kExitOk;
}

int cmd_analyze(const CommonArgs& args, const std::string& series_path) {
    const auto cfg = load(args);
    const pca::Grid grid = make_grid(cfg.run);

    fs::path series_file =
        series_path.empty() ? fs::path(args.out_dir) / "series.csv" : fs::path(series_path);
    std::ifstream in(series_file);
    if (!in) throw pca::ConfigError::bad_value("cannot open series " + series_file.string());

    pca::Trajectory traj;
    traj.series = pca::read_series_csv(in);
    if (traj.series.size() >= 2) traj.dt = traj.series[1].t - traj.series[0].t;
    traj.n_steps = static_cast<long>(traj.series.size()) - 1;

    const double s_tilde = pca::sigma_tilde(cfg.params);
    if (!traj.series.empty()) {
        const auto& first = traj.series.front();
        traj.sigma_hypothesis = cfg.schedule.s_le_Sc && first.min_sigma >= 0.0 &&
                                first.max_sigma <= s_tilde;
        traj.p_hypothesis = cfg.schedule.s_le_Sc && first.min_p >= 0.0;
        for (const auto& row : traj.series) {
            traj.violations.max_phi = std::max(
                traj.violations.max_phi, std::max(-row.min_phi, row.max_phi - 1.0));
            if (traj.sigma_hypothesis)
                traj.violations.max_sigma =
                    std::max(traj.violations.max_sigma,
                             std::max(-row.min_sigma, row.max_sigma - s_tilde));
            if (traj.p_hypothesis)
                traj.violations.max_p = std::max(traj.violations.max_p, -row.min_p);
        }
    }

    const pca::RunReport report =
        pca::assemble_report(traj, grid, cfg.params, cfg.schedule, cfg.run);
    fs::create_directories(args.out_dir);
    std::ofstream rep(fs::path(args.out_dir) / "report.csv");
    pca::write_report_csv(rep, report);
    pca::print_verdict_table(std::cout, report);
    return pca::all_asserted_pass(report) ? kExitOk : kExitCheckFailed;
}

int sweep_concurrency(std::size_t runs) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("PCA_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) hw = std::min<unsigned>(hw, static_cast<unsigned>(cap));
    }
    return static_cast<int>(std::min<std::size_t>(hw, runs));
}

int cmd_sweep(const CommonArgs& args) {
    const std::string text = read_text_file(args.config_path);
    const auto base = pca::load_config(text, args.overrides);
    if (!base.sweep) throw pca::ConfigError::bad_value("sweep requires a [sweep] section");
    const auto& sweep = *base.sweep;

    struct Row {
        bool ok = false;
        std::string error;
        std::string params_hash;
        bool condition_met = false;
        double beta = 0.0;
        std::optional<double> rate;
        bool asserted_pass = false;
        std::vector<std::pair<std::string, std::string>> verdicts;
    };
    std::vector<Row> rows(sweep.values.size());

    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= sweep.values.size()) return;
            Row& row = rows[i];
            try {
                auto overrides = args.overrides;
                overrides.push_back(sweep.axis + "=" + pca::format_double(sweep.values[i]));
                auto cfg = pca::load_config(text, overrides);
                if (args.seed) cfg.run.seed = *args.seed;
                char tag[16];
                std::snprintf(tag, sizeof(tag), "run_%03zu", i);
                const fs::path dir = fs::path(args.out_dir) / tag;
                const auto out = run_simulation(cfg, dir, args.clamp);
                const pca::RunReport report = pca::assemble_report(
                    out.trajectory, out.grid, cfg.params, cfg.schedule, cfg.run);
                std::ofstream rep(dir / "report.csv");
                pca::write_report_csv(rep, report);
                row.ok = true;
                row.params_hash = pca::params_hash(cfg.params, cfg.schedule);
                row.condition_met = report.predicted.condition_met;
                row.beta = report.predicted.beta_predicted;
                if (report.fit_e) row.rate = report.fit_e->rate;
                row.asserted_pass = pca::all_asserted_pass(report);
                for (const auto& c : report.checks)
                    row.verdicts.emplace_back(c.name, pca::status_name(c.status));
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    const int workers = sweep_concurrency(sweep.values.size());
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    fs::create_directories(args.out_dir);
    std::ofstream summary(fs::path(args.out_dir) / "summary.csv");
    summary << "run,axis,value,params_hash,status,condition_met,beta_predicted,"
               "decay_rate_E,asserted_pass,verdicts\n";
    bool all_ok = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        summary << i << ',' << sweep.axis << ',' << pca::format_double(sweep.values[i])
                << ',';
        if (!row.ok) {
            all_ok = false;
            std::string msg = row.error;
            for (auto& ch : msg)
                if (ch == ',' || ch == '\n') ch = ' ';
            summary << ",error,,,," << msg << '\n';
            continue;
        }
        summary << row.params_hash << ",done," << (row.condition_met ? "true" : "false")
                << ',' << (row.condition_met ? pca::format_double(row.beta) : std::string())
                << ',' << (row.rate ? pca::format_double(*row.rate) : std::string()) << ','
                << (row.asserted_pass ? "true" : "false") << ',';
        for (std::size_t k = 0; k < row.verdicts.size(); ++k) {
            if (k) summary << ' ';
            summary << row.verdicts[k].first << '=' << row.verdicts[k].second;
        }
        summary << '\n';
        all_ok = all_ok && row.asserted_pass;
    }
    std::cout << "sweep summary: " << (fs::path(args.out_dir) / "summary.csv").string()
              << '\n';
    return all_ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phase-field tumor growth simulator and long-time behavior checker"};
    app.require_subcommand(1);

    CommonArgs sim_args, steady_args, analyze_args, verify_args, sweep_args;
    std::string series_path;

    auto* sim = app.add_subcommand("simulate", "integrate and write the time series");
    add_common(sim, sim_args);
    auto* steady = app.add_subcommand("steady", "stationary solves and route agreement");
    add_common(steady, steady_args, false);
    auto* analyze = app.add_subcommand("analyze", "run checks against an existing series");
    add_common(analyze, analyze_args, false);
    analyze->add_option("--series", series_path, "series.csv path (default <out>/series.csv)");
    auto* verify = app.add_subcommand("verify", "simulate then run every check");
    add_common(verify, verify_args);
    auto* sweep = app.add_subcommand("sweep", "one run per value of a parameter axis");
    add_common(sweep, sweep_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_args);
        if (steady->parsed()) return cmd_steady(steady_args);
        if (analyze->parsed()) return cmd_analyze(analyze_args, series_path);
        if (verify->parsed()) return cmd_verify(verify_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
    } catch (const pca::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const pca::CflViolation& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const pca::InvalidInitialState& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const pca::SolverDivergence& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolverError;
    } catch (const pca::NoConvergence& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolverError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSolverError;
    }
    return kExitOk;
}
