#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "palign/integrator.hpp"
#include "palign/measures.hpp"
#include "palign/model.hpp"

namespace palign {

/// Compactly supported initial density on R^d.
struct DensitySpec {
    enum class Kind { UniformBox, UniformBall, TruncatedGaussian, Mixture };
    Kind kind = Kind::UniformBox;
    std::vector<double> lo, hi;  // box
    std::vector<double> center;  // ball and gaussian
    double radius = 1.0;         // ball radius, gaussian truncation radius
    double sigma = 1.0;          // gaussian
    std::vector<DensitySpec> components;
    std::vector<double> mix_weights;
};

struct VelocitySpec {
    enum class Kind { Constant, Linear, Shear, TwoCluster };
    Kind kind = Kind::Constant;
    std::vector<double> value;   // constant value, linear offset b
    std::vector<double> matrix;  // linear A, row-major d x d
    double rate = 1.0;           // shear: v_0 = rate * x_1
    double speed = 1.0;          // two-cluster
    double split = 0.0;          // two-cluster: clusters are x_0 < split and x_0 >= split
    bool converging = false;     // two-cluster: true sends the clusters towards each other
};

struct InitialDataSpec {
    std::size_t dim = 1;
    DensitySpec rho0;
    VelocitySpec u0;
    std::uint64_t seed = 0;
};

/// N positions drawn i.i.d. from rho0 (exact duplicates redrawn), velocities u0(x). The random
/// stream depends on (seed, N) only. Throws DegenerateSupportError for zero-volume supports and
/// DomainError for malformed specs.
ParticleState atomize(const InitialDataSpec& spec, std::size_t n);
/// Positions uniform in [-half_width, half_width]^d (distinct), velocities uniform in
/// [-speed, speed]^d. Platform-independent stream seeded by (seed, N).
ParticleState random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed, double half_width = 1.0,
                           double speed = 1.0);
std::vector<double> evaluate_u0(const VelocitySpec& u0, std::span<const double> x);

/// Seed for the s-th replica of a study.
std::uint64_t replica_seed(std::uint64_t base, std::uint64_t replica);

// Weak-form residuals ----------------------------------------------------------------------------

/// phi(t, x, v) with hand-coded derivatives. gx and gv have size d.
struct KineticTest {
    std::string name;
    std::function<void(double t, std::span<const double> x, std::span<const double> v, double& phi,
                       double& dphi_dt, std::span<double> gx, std::span<double> gv)>
        eval;
};

/// Fixed family "kinetic-v1": (1 - t/T)^k times {1, v_0, |v|^2, Gaussian bump in x,
/// (1 + x_0) * Gaussian bump in (x, v)}.
std::vector<KineticTest> kinetic_test_bank(std::size_t dim, double horizon);

struct WeakResidual {
    std::string name;
    double residual = 0.0;
    /// Mass of the pairs dropped from the singular double integral (macroscopic forms only),
    /// maximised over samples.
    double excluded_mass = 0.0;
};

/// |int phi(T) dmu_T - int phi(0) dmu_0 - int_0^T int (d_t phi + v . grad_x phi) dmu dt
///   - (1/2) int_0^T int int (grad_v phi - grad_v phi') . (v' - v) |v' - v|^{p-2} / r^alpha dmu dmu dt|,
/// time integrals by trapezoid on the recorded samples.
std::vector<WeakResidual> weak_residual_kinetic(const Trajectory& traj, const std::vector<KineticTest>& bank);

struct ScalarTest {
    std::string name;
    std::function<void(double t, std::span<const double> x, double& phi, double& dphi_dt, std::span<double> grad)>
        eval;
};

struct VectorTest {
    std::string name;
    /// phi (size d), d_t phi (size d), jacobian row-major jac[a * d + b] = d phi_a / d x_b.
    std::function<void(double t, std::span<const double> x, std::span<double> phi, std::span<double> dphi_dt,
                       std::span<double> jac)>
        eval;
};

struct MacroTestBank {
    std::vector<ScalarTest> scalar;
    std::vector<VectorTest> vector;
};

/// Fixed family "macro-v1": scalar {1, bump, x_0} and vector {e_a, bump e_0, x} with time factors.
MacroTestBank macro_test_bank(std::size_t dim, double horizon);
/// Only the time-factor-times-constant members.
MacroTestBank macro_constant_bank(std::size_t dim, double horizon);

/// Continuity and momentum residuals with (rho, u) replaced by the cell-aggregated empirical
/// quantities at cell size h. Same-cell pairs closer than h are dropped from the singular sum.
std::vector<WeakResidual> weak_residual_macro(const Trajectory& traj, double h, const MacroTestBank& bank);

struct EnergyInequality {
    /// min over samples t of [int |u_0|^2 drho_0 - int |u_t|^2 drho_t - int_0^t D_p[u] ds].
    double slack = 0.0;
    double slack_final = 0.0;
    double excluded_mass = 0.0;
    bool holds = true;
};

/// Energy inequality with cell-aggregated velocity; holds iff slack >= -tolerance.
EnergyInequality energy_inequality_check(const Trajectory& traj, double h, double tolerance = 1e-6);

// Convergence studies ----------------------------------------------------------------------------

struct StudyConfig {
    InitialDataSpec spec;
    ModelParams params;  // n_particles is overwritten per run
    IntegratorConfig integrator;
    std::vector<std::size_t> n_list;
    double horizon = 1.0;
    std::vector<double> checkpoints;  // defaults to {0, horizon}
    double h = 0.1;
    std::vector<std::uint64_t> seeds;
    DblOptions dbl;
    std::size_t jobs = 1;
    /// Directory for per-run checkpoint files; runs found there are reused instead of recomputed.
    std::string cache_dir;
    /// Also compute the phase-space distances (the most expensive part of a study).
    bool phase_space = true;
};

struct Trend {
    std::vector<double> medians;
    std::size_t inversions = 0;
    std::size_t allowed = 0;
    bool passed = true;
};

/// Medians must not increase, with at most one inversion per four doublings (minimum one).
Trend assess_trend(std::vector<double> medians, std::size_t doublings);

struct ConvergenceReport {
    std::vector<std::size_t> n_list;
    std::vector<double> checkpoints;
    std::vector<std::uint64_t> seeds;
    /// [seed][pair k = (N_k, N_{k+1})][checkpoint]
    std::vector<std::vector<std::vector<double>>> dbl_rho;
    std::vector<std::vector<std::vector<double>>> dbl_mu;
    /// [seed][N][checkpoint]
    std::vector<std::vector<std::vector<double>>> monokineticity;
    std::vector<std::vector<std::vector<double>>> energy;
    std::vector<std::vector<std::vector<double>>> largest_cell_mass;
    bool any_approximate = false;
    Trend rho_trend;  // medians of dbl_rho at the last checkpoint
    Trend w_trend;    // medians of W at the last checkpoint
    bool energy_monotone = true;
    bool passed() const { return rho_trend.passed && w_trend.passed && energy_monotone; }
};

/// Checkpoint states of one run, loaded from cache_dir when present.
std::vector<ParticleState> study_run(const StudyConfig& cfg, std::uint64_t seed, std::size_t n);

/// Throws DomainError when fewer than two particle counts are given or the list is not doubling.
ConvergenceReport convergence_study(const StudyConfig& cfg);

}  // namespace palign
