#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "palign/measures.hpp"
#include "palign/model.hpp"

namespace palign::oracle {

/// Relative coordinate of a symmetric two-particle system: r = x2 - x1, rdot = v2 - v1.
struct ReducedState {
    double t = 0.0;
    double r = 1.0;
    double rdot = 0.0;
};

struct ReducedDerivative {
    double dr = 0.0;
    double drdot = 0.0;
};

/// r'' = -r'|r'|^{p-2} r^{-alpha}. Throws CollisionError when r <= 0.
ReducedDerivative reduced_rhs(const ReducedState& s, const ModelParams& params);

/// Initial relative velocity for which the first integral vanishes (alpha > 1, p > alpha + 2).
double matched_initial_velocity(double r0, const ModelParams& params);
/// Same for alpha = 1, p > 3 and 0 < r0 < 1: rdot0 = -((p-3)(-ln r0))^{-1/(p-3)}.
double matched_initial_velocity_alpha1(double r0, const ModelParams& params);

/// Exact collision time of matched data, from rdot = -K r^beta with beta = (alpha-1)/(p-3).
double collision_time(double r0, const ModelParams& params);

/// Upper bound on the collision time for alpha = 1, p > 3 with matched data.
/// Throws DomainError unless 0 < r0 < exp(-1/(p-3)).
double collision_bound_alpha1(double r0, const ModelParams& params);

struct ReducedOptions {
    double tol = 1e-12;
    /// r below this counts as a collision.
    double r_stop = 1e-10;
    double dt_init = 1e-3;
    std::size_t max_steps = 50'000'000;
};

struct ReducedRun {
    ReducedState final;
    bool collided = false;
    /// The relative velocity reached zero in finite time (p < 2) and stays there.
    bool came_to_rest = false;
    /// Time at which r crossed r_stop, if collided.
    double t_stop = 0.0;
    /// t_stop plus a power-law extrapolation of the remaining time to r = 0.
    double t_collision = 0.0;
    double min_r = 0.0;
    std::size_t steps = 0;
};

/// Adaptive classical RK4 with step-doubling error control, integrated up to t_end or a collision.
ReducedRun integrate_reduced(const ReducedState& s0, const ModelParams& params, double t_end,
                             const ReducedOptions& options = {});

struct SweepGrid {
    std::vector<double> alpha;
    /// Each entry is added to alpha to form p.
    std::vector<double> p_offset;
    std::vector<double> r0;
    double horizon = 100.0;
    double tol = 1e-12;
};

struct SweepRow {
    double alpha = 0.0;
    double p = 0.0;
    double r0 = 0.0;
    /// Closed-form time, "<=bound" for alpha = 1, or "no-collision".
    std::string tc_closed;
    /// Integrated time or "no-collision".
    std::string tc_integrated;
    /// Relative difference, "within-bound" / "exceeds-bound" for alpha = 1, or empty.
    std::string rel_err;
    /// Parsed relative error when both times are numeric.
    double rel_err_value = 0.0;
    /// The row behaves as predicted (collision iff p > alpha + 2, within tolerance or bound).
    bool consistent = true;
};

std::vector<SweepRow> collision_sweep(const SweepGrid& grid);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Textbook O(N^2) double loop with std::pow; no antisymmetric accumulation.
std::vector<double> force_bruteforce(const ParticleState& state, const ModelParams& params);

/// Best objective over random feasible test functions: a lower bound on d_BL.
double dbl_bruteforce(const AtomicMeasure& mu, const AtomicMeasure& nu, std::size_t n_random = 10'000,
                      std::uint64_t seed = 1);

/// Dense tableau simplex with Bland's rule on the full pairwise constraint set. Small inputs only.
double dbl_simplex_reference(const AtomicMeasure& mu, const AtomicMeasure& nu);

}  // namespace palign::oracle
