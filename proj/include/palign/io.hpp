#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "palign/integrator.hpp"
#include "palign/measures.hpp"

namespace palign::io {

inline constexpr int kFormatVersion = 1;

/// Shortest form that round-trips (17 significant digits).
std::string format_double(double x);

/// Rows `t,i,x_0..x_{d-1},v_0..v_{d-1}`, one per particle per state.
void write_states_csv(std::ostream& out, const std::vector<ParticleState>& states);
/// Inverse of write_states_csv. Throws IoError on malformed input.
std::vector<ParticleState> read_states_csv(std::istream& in);

/// JSON sidecar with format_version, params, config, events, counters and per-sample diagnostics.
std::string trajectory_sidecar(const Trajectory& traj);
/// Rows `t,E,Dp,Dalpha,p_0..p_{d-1},Vmax,Xmax,dmin`.
void write_diagnostics_csv(std::ostream& out, const Trajectory& traj);

struct TrajectoryFiles {
    std::string states;
    std::string sidecar;
    std::string diagnostics;
};

/// Writes <dir>/<stem>.csv, <stem>.json and <stem>_diagnostics.csv.
TrajectoryFiles save_trajectory(const Trajectory& traj, const std::string& dir, const std::string& stem = "trajectory");
/// Reloads states, params, config, events and diagnostics written by save_trajectory.
Trajectory load_trajectory(const std::string& states_csv, const std::string& sidecar_json);

/// CSV `w,z_0..z_{k-1}` plus `<path>.json` with dimension, atom count and mass.
void write_measure(const AtomicMeasure& mu, const std::string& csv_path);
/// Reads the CSV; the sidecar is optional and, if present, checked for consistency.
AtomicMeasure read_measure(const std::string& csv_path);

/// Writes through a temporary file and renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace palign::io
