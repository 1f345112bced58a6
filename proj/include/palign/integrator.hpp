#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "palign/diagnostics.hpp"
#include "palign/model.hpp"

namespace palign {

struct IntegratorConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double dt_init = 1e-3;
    double dt_max = 0.1;
    double dt_min = 1e-14;
    /// Collision threshold on the minimum pair distance. Unset means 1e-8 * initial d_min.
    std::optional<double> collision_eps;
    /// Steps are limited to kappa * min_ij |x_i - x_j| / |v_i - v_j|.
    double kappa = 0.5;
    std::size_t max_steps = 100'000'000;
    /// Steps this short are accepted even when the error estimate exceeds the tolerance. The
    /// particle integrator uses it only for p < 2, where the field is not Lipschitz at equal
    /// velocities and p = 1 makes it discontinuous. Zero disables it.
    double nonsmooth_floor = 0.0;

    void validate() const;
};

/// Embedded Dormand-Prince 5(4) pair with FSAL and a PI step controller, on a flat state vector.
class Dopri5 {
public:
    using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;
    /// Upper bound on the next step from the current state (e.g. a proximity clamp).
    using Limiter = std::function<double(double t, std::span<const double> y)>;

    struct Step {
        double dt = 0.0;
        double err = 0.0;
    };

    Dopri5(Rhs rhs, const IntegratorConfig& config, Limiter limiter = {});

    /// Advances (t, y) by one accepted step that does not pass t_limit. Throws StepStallError if
    /// the required step falls below dt_min.
    Step step(double& t, std::vector<double>& y, double t_limit);

    /// Drop the cached first stage (call after modifying y externally).
    void reset() { fsal_valid_ = false; }

    std::size_t accepted() const noexcept { return accepted_; }
    std::size_t rejected() const noexcept { return rejected_; }
    /// Accepted steps whose error estimate exceeded the tolerance (taken at nonsmooth_floor).
    std::size_t floored() const noexcept { return floored_; }
    double next_dt() const noexcept { return h_; }

private:
    bool try_stages(double t, std::span<const double> y, double h);

    Rhs rhs_;
    IntegratorConfig cfg_;
    Limiter limiter_;
    double h_;
    double facold_ = 1e-4;
    bool fsal_valid_ = false;
    std::size_t accepted_ = 0;
    std::size_t rejected_ = 0;
    std::size_t floored_ = 0;
    std::vector<double> k_[7];
    std::vector<double> tmp_, ynew_;
};

enum class EventKind { Collision, StallMinDt };

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::Collision;
    std::string detail;
};

std::string to_string(EventKind kind);

struct TrajectoryStep {
    ParticleState state;
    double accepted_dt = 0.0;
    double err_estimate = 0.0;
    DiagnosticsRecord diag;
};

struct Trajectory {
    ModelParams params;
    IntegratorConfig config;
    std::vector<TrajectoryStep> steps;
    std::vector<Event> events;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    std::size_t floored_steps = 0;
    /// Smallest pair distance over every accepted step (not only recorded samples).
    double min_pair_dist_seen = 0.0;

    bool collided() const;
    const ParticleState& final_state() const { return steps.back().state; }
};

struct StepOutcome {
    ParticleState state;
    double accepted_dt = 0.0;
    double err_estimate = 0.0;
};

/// Stateful particle stepper: keeps the step-size history and FSAL stage between steps.
class ParticleIntegrator {
public:
    ParticleIntegrator(const ModelParams& params, const IntegratorConfig& config, const ParticleState& state0);

    /// One accepted step, not beyond t_limit.
    Dopri5::Step step(double t_limit);
    /// Accepted steps until t_target is reached exactly.
    void advance_to(double t_target);

    ParticleState state() const;
    double time() const noexcept { return t_; }
    /// Minimum pair distance of the current state.
    double min_pair_dist() const noexcept { return d_min_; }
    std::size_t accepted() const noexcept { return stepper_.accepted(); }
    std::size_t rejected() const noexcept { return stepper_.rejected(); }
    std::size_t floored() const noexcept { return stepper_.floored(); }

private:
    double limit(std::span<const double> y);

    ModelParams params_;
    IntegratorConfig cfg_;
    ForceWorkspace ws_;
    ForceWorkspace limiter_ws_;
    Dopri5 stepper_;
    std::vector<double> y_;
    double t_;
    double d_min_ = 0.0;
};

/// A single accepted adaptive step from `state`, starting from config.dt_init.
StepOutcome step_adaptive(const ParticleState& state, const ModelParams& params, const IntegratorConfig& config);

using Observer = std::function<void(const TrajectoryStep&)>;

/// Integrates to t_end or until an event. Samples every `observer_stride` accepted steps and at
/// the final time. A Collision event is recorded when the minimum pair distance drops below
/// collision_eps; a StallMinDt event when the step controller stalls.
Trajectory run(const ParticleState& state0, const ModelParams& params, const IntegratorConfig& config,
               double t_end, std::size_t observer_stride = 1, const Observer& observer = {});

}  // namespace palign
