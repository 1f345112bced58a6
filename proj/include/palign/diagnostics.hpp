#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "palign/model.hpp"

namespace palign {

struct Trajectory;

struct DiagnosticsRecord {
    double t = 0.0;
    double energy_E = 0.0;            // (1/N) sum |v_i|^2
    double dissipation_Dp = 0.0;      // (1/N^2) sum_{i != j} |v_i - v_j|^p / |x_i - x_j|^alpha
    double dissipation_Dalpha = 0.0;  // same with exponent alpha + 2 on the velocity difference
    std::vector<double> mean_velocity;
    double max_speed = 0.0;
    double max_position = 0.0;
    double min_pair_dist = 0.0;
};

struct ClusterReport {
    std::vector<std::size_t> cluster;
    double x_norm = 0.0;
    double v_norm = 0.0;
    /// v_norm / x_norm; +inf when only x_norm vanishes, empty when both vanish.
    std::optional<double> ratio;
};

double kinetic_energy(const ParticleState& state);

/// Ordered-pair sum (1/N^2) sum_{i != j} |v_i - v_j|^q / r_ij^alpha. CollisionError on a zero
/// distance with the exact kernel.
double dissipation(const ParticleState& state, const ModelParams& params, double q);
double dissipation_Dp(const ParticleState& state, const ModelParams& params);
double dissipation_Dalpha(const ParticleState& state, const ModelParams& params);

/// (1/N) sum v_i; constant along exact trajectories.
std::vector<double> momentum(const ParticleState& state);
double max_speed(const ParticleState& state);
double max_position(const ParticleState& state);
double min_pair_dist(const ParticleState& state);

DiagnosticsRecord diagnose(const ParticleState& state, const ModelParams& params);

/// ||x||_C = sqrt(sum_{i,j in C} |x_i - x_j|^2) and the same for v. EmptyClusterError if |C| < 2.
ClusterReport cluster_norms(const ParticleState& state, std::span<const std::size_t> cluster);

/// Weight on the time-integrated dissipation in the energy balance E(t0) - E(t) = c * int D_p.
/// Differentiating E along the particle system gives c = 1 (Unit). Halved keeps the factor 1/2
/// some references print in front of the double sum; the data does not support it.
enum class BalanceForm { Unit, Halved };

/// Trapezoidal integral of D_p over the recorded samples.
double integrated_dissipation(const Trajectory& traj);

/// |E(t_0) - E(t_end) - c * int D_p dt| on the recorded samples. Needs >= 2 samples.
double energy_balance_residual(const Trajectory& traj, BalanceForm form = BalanceForm::Unit);

}  // namespace palign
