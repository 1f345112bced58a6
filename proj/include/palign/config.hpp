#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "palign/integrator.hpp"
#include "palign/meanfield.hpp"
#include "palign/oracle.hpp"

// JSON configuration files for the command-line tool. Unknown keys are rejected, and every error
// is a ConfigError naming the offending field (or the line and column of a syntax error).

namespace palign::config {

enum class ScenarioKind { TwoParticle, RandomCloud, TwoCluster, FromFile };

struct EmitFlags {
    bool trajectory = true;
    bool diagnostics = true;
    /// Plot-ready series: plot_series.csv with t, E, cumulative int D_p, Vmax, Xmax, dmin.
    bool plots = true;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::RandomCloud;
    ModelParams params;
    IntegratorConfig integrator;
    double t_end = 1.0;
    std::size_t stride = 1;
    std::uint64_t seed = 0;
    std::string out = "palign_out";
    EmitFlags emit;

    // two_particle: x = (-r0/2, r0/2) e_0, relative velocity rdot0 e_0.
    double r0 = 1.0;
    std::optional<double> rdot0;  // empty means the matched collision velocity

    // random_cloud
    double half_width = 1.0;
    double speed = 1.0;

    // two_cluster
    InitialDataSpec initial;

    // from_file: last state of a states CSV, resolved against the config directory
    std::string state_file;
};

ScenarioConfig parse_scenario(const std::string& text, const std::string& base_dir = "");
ScenarioConfig load_scenario(const std::string& path);
ParticleState initial_state(const ScenarioConfig& cfg);

struct StudyFile {
    StudyConfig study;
    std::string out = "palign_study";
};

StudyFile parse_study(const std::string& text, const std::string& base_dir = "");
StudyFile load_study(const std::string& path);

oracle::SweepGrid parse_grid(const std::string& text);
oracle::SweepGrid load_grid(const std::string& path);

}  // namespace palign::config
