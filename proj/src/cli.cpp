#include "palign/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "palign/config.hpp"
#include "palign/diagnostics.hpp"
#include "palign/errors.hpp"
#include "palign/io.hpp"
#include "palign/kernels.hpp"

namespace palign::cli {

namespace fs = std::filesystem;
using io::format_double;

namespace {

std::string plot_series_csv(const Trajectory& traj) {
    std::ostringstream o;
    o << "t,E,int_Dp,Vmax,Xmax,dmin\n";
    double integral = 0.0;
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& d = traj.steps[k].diag;
        if (k > 0) {
            const auto& p = traj.steps[k - 1].diag;
            integral += 0.5 * (d.t - p.t) * (d.dissipation_Dp + p.dissipation_Dp);
        }
        o << format_double(d.t) << ',' << format_double(d.energy_E) << ',' << format_double(integral) << ','
          << format_double(d.max_speed) << ',' << format_double(d.max_position) << ','
          << format_double(d.min_pair_dist) << '\n';
    }
    return o.str();
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::optional<std::string>& out_dir, std::ostream& out) {
    auto cfg = config::load_scenario(config_path);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out = *out_dir;
    const ParticleState s0 = config::initial_state(cfg);
    const Trajectory traj = run(s0, cfg.params, cfg.integrator, cfg.t_end, cfg.stride);

    const fs::path dir(cfg.out);
    io::write_file_atomic((dir / "trajectory.json").string(), io::trajectory_sidecar(traj));
    if (cfg.emit.trajectory) {
        std::vector<ParticleState> states;
        for (const auto& st : traj.steps) states.push_back(st.state);
        std::ostringstream o;
        io::write_states_csv(o, states);
        io::write_file_atomic((dir / "trajectory.csv").string(), o.str());
    }
    if (cfg.emit.diagnostics) {
        std::ostringstream o;
        io::write_diagnostics_csv(o, traj);
        io::write_file_atomic((dir / "trajectory_diagnostics.csv").string(), o.str());
    }
    if (cfg.emit.plots) io::write_file_atomic((dir / "plot_series.csv").string(), plot_series_csv(traj));

    const auto& last = traj.steps.back();
    out << "t=" << format_double(last.state.t) << " accepted=" << traj.accepted_steps
        << " rejected=" << traj.rejected_steps << " floored=" << traj.floored_steps << " E=" << format_double(last.diag.energy_E)
        << " min_pair_dist=" << format_double(traj.min_pair_dist_seen) << '\n';
    int code = kOk;
    for (const auto& e : traj.events) {
        out << "event " << to_string(e.kind) << " t=" << format_double(e.t) << ' ' << e.detail << '\n';
        if (e.kind == EventKind::Collision) code = kCollision;
        else if (code == kOk) code = kError;
    }
    out << "output " << dir.string() << '\n';
    return code;
}

int cmd_oracle_sweep(const std::string& grid_path, const std::optional<std::string>& out_path, std::ostream& out) {
    const auto grid = config::load_grid(grid_path);
    const auto rows = oracle::collision_sweep(grid);
    const std::string csv = oracle::sweep_csv(rows);
    if (out_path) {
        io::write_file_atomic(*out_path, csv);
        std::size_t inconsistent = 0;
        for (const auto& r : rows) inconsistent += r.consistent ? 0 : 1;
        out << rows.size() << " rows, " << inconsistent << " inconsistent, written to " << *out_path << '\n';
    } else {
        out << csv;
    }
    return kOk;
}

int cmd_dbl(const std::string& a, const std::string& b, std::size_t cap, std::ostream& out) {
    DblOptions opt;
    opt.support_cap = cap;
    const auto r = dbl_solve(io::read_measure(a), io::read_measure(b), opt);
    out << format_double(r.value) << '\n' << "approximate=" << (r.approximate ? 1 : 0) << '\n';
    return kOk;
}

std::string cube_csv(const std::vector<std::vector<std::vector<double>>>& m, const ConvergenceReport& rep, bool pairs) {
    std::ostringstream o;
    o << (pairs ? "seed,n,n2,t,value\n" : "seed,n,t,value\n");
    for (std::size_t s = 0; s < m.size(); ++s)
        for (std::size_t k = 0; k < m[s].size(); ++k)
            for (std::size_t c = 0; c < m[s][k].size(); ++c) {
                o << rep.seeds[s] << ',' << rep.n_list[k] << ',';
                if (pairs) o << rep.n_list[k + 1] << ',';
                o << format_double(rep.checkpoints[c]) << ',' << format_double(m[s][k][c]) << '\n';
            }
    return o.str();
}

nlohmann::json trend_json(const Trend& t) {
    return {{"medians", t.medians}, {"inversions", t.inversions}, {"allowed", t.allowed}, {"passed", t.passed}};
}

int cmd_study(const std::string& config_path, const std::optional<std::size_t>& jobs, std::ostream& out) {
    auto file = config::load_study(config_path);
    if (jobs) file.study.jobs = std::max<std::size_t>(1, *jobs);
    const auto rep = convergence_study(file.study);
    const fs::path dir(file.out);
    io::write_file_atomic((dir / "dbl_rho.csv").string(), cube_csv(rep.dbl_rho, rep, true));
    if (file.study.phase_space) io::write_file_atomic((dir / "dbl_mu.csv").string(), cube_csv(rep.dbl_mu, rep, true));
    io::write_file_atomic((dir / "monokineticity.csv").string(), cube_csv(rep.monokineticity, rep, false));
    io::write_file_atomic((dir / "energy.csv").string(), cube_csv(rep.energy, rep, false));
    io::write_file_atomic((dir / "largest_cell_mass.csv").string(), cube_csv(rep.largest_cell_mass, rep, false));
    const nlohmann::json summary = {{"format_version", io::kFormatVersion},
                                    {"n_list", rep.n_list},
                                    {"checkpoints", rep.checkpoints},
                                    {"seeds", rep.seeds},
                                    {"approximate", rep.any_approximate},
                                    {"rho_trend", trend_json(rep.rho_trend)},
                                    {"w_trend", trend_json(rep.w_trend)},
                                    {"energy_monotone", rep.energy_monotone},
                                    {"passed", rep.passed()}};
    io::write_file_atomic((dir / "summary.json").string(), summary.dump(1) + "\n");
    auto line = [&out](const char* name, const Trend& t) {
        out << name << ' ' << (t.passed ? "PASS" : "FAIL") << " inversions=" << t.inversions << "/" << t.allowed
            << " medians=";
        for (std::size_t k = 0; k < t.medians.size(); ++k) out << (k ? "," : "") << format_double(t.medians[k]);
        out << '\n';
    };
    line("rho_trend", rep.rho_trend);
    line("w_trend", rep.w_trend);
    out << "energy_monotone " << (rep.energy_monotone ? "PASS" : "FAIL") << '\n';
    out << "output " << dir.string() << '\n';
    return rep.passed() ? kOk : kTrendFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"p-Cucker-Smale simulation and verification tool", "palign"};
    app.require_subcommand(1);

    std::string config_path, grid_path, mu_path, nu_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir, sweep_out;
    std::optional<std::size_t> jobs;
    std::size_t cap = DblOptions{}.support_cap;

    auto* run_cmd = app.add_subcommand("run", "Integrate one scenario and write its trajectory");
    run_cmd->add_option("--config", config_path, "Scenario JSON")->required();
    run_cmd->add_option("--seed", seed, "Override the scenario seed");
    run_cmd->add_option("--out", out_dir, "Override the output directory");

    auto* sweep_cmd = app.add_subcommand("oracle-sweep", "Two-particle collision-time sweep");
    sweep_cmd->add_option("--grid", grid_path, "Grid JSON")->required();
    sweep_cmd->add_option("--out", sweep_out, "CSV path (default: standard output)");

    auto* dbl_cmd = app.add_subcommand("dbl", "Bounded-Lipschitz distance between two measure files");
    dbl_cmd->add_option("mu", mu_path, "First measure CSV")->required();
    dbl_cmd->add_option("nu", nu_path, "Second measure CSV")->required();
    dbl_cmd->add_option("--support-cap", cap, "Union support size above which inputs are subsampled");

    auto* study_cmd = app.add_subcommand("study", "Mean-field convergence study");
    study_cmd->add_option("--config", config_path, "Study JSON")->required();
    study_cmd->add_option("--jobs", jobs, "Concurrent runs");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kError;
    }

    if (const char* det = std::getenv("PALIGN_DETERMINISTIC"); det && std::string(det) == "1")
        kernels::set_backend(kernels::Backend::Scalar);

    try {
        if (*run_cmd) return cmd_run(config_path, seed, out_dir, out);
        if (*sweep_cmd) return cmd_oracle_sweep(grid_path, sweep_out, out);
        if (*dbl_cmd) return cmd_dbl(mu_path, nu_path, cap, out);
        if (*study_cmd) return cmd_study(config_path, jobs, out);
    } catch (const std::exception& e) {
        err << "palign: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

}  // namespace palign::cli
