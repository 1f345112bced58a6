#include "palign/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "palign/errors.hpp"
#include "palign/integrator.hpp"
#include "palign/kernels.hpp"

namespace palign {

double kinetic_energy(const ParticleState& state) {
    double s = 0.0;
    for (double a : state.v) s += a * a;
    return s / static_cast<double>(state.n);
}

double dissipation(const ParticleState& state, const ModelParams& params, double q) {
    check_state(state, params);
    ForceWorkspace ws;
    ws.load(state.x, state.v, state.n, state.dim);
    bool coincident = false;
    const double pairs = kernels::active().pair_sum({ws.xs(), ws.vs(), state.n, state.dim},
                                                   kernels::PairWeight::dissipation(params.alpha, q, params.reg_delta),
                                                   &coincident);
    if (coincident) throw CollisionError("zero pair distance in dissipation functional");
    const double n = static_cast<double>(state.n);
    // Unordered-pair sum counted twice for the ordered double sum.
    return 2.0 * pairs / (n * n);
}

double dissipation_Dp(const ParticleState& state, const ModelParams& params) {
    return dissipation(state, params, params.p);
}

double dissipation_Dalpha(const ParticleState& state, const ModelParams& params) {
    return dissipation(state, params, params.alpha + 2.0);
}

std::vector<double> momentum(const ParticleState& state) {
    std::vector<double> m(state.dim, 0.0);
    for (std::size_t i = 0; i < state.n; ++i)
        for (std::size_t k = 0; k < state.dim; ++k) m[k] += state.v[i * state.dim + k];
    for (double& a : m) a /= static_cast<double>(state.n);
    return m;
}

namespace {

double max_row_norm(const std::vector<double>& a, std::size_t n, std::size_t dim) {
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += a[i * dim + k] * a[i * dim + k];
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

}  // namespace

double max_speed(const ParticleState& state) { return max_row_norm(state.v, state.n, state.dim); }

double max_position(const ParticleState& state) { return max_row_norm(state.x, state.n, state.dim); }

double min_pair_dist(const ParticleState& state) {
    if (state.n < 2) return std::numeric_limits<double>::infinity();
    ForceWorkspace ws;
    ws.load(state.x, state.v, state.n, state.dim);
    return std::sqrt(kernels::active().extrema({ws.xs(), ws.vs(), state.n, state.dim}).min_dist_sq);
}

DiagnosticsRecord diagnose(const ParticleState& state, const ModelParams& params) {
    DiagnosticsRecord r;
    r.t = state.t;
    r.energy_E = kinetic_energy(state);
    r.dissipation_Dp = dissipation_Dp(state, params);
    r.dissipation_Dalpha = dissipation_Dalpha(state, params);
    r.mean_velocity = momentum(state);
    r.max_speed = max_speed(state);
    r.max_position = max_position(state);
    r.min_pair_dist = min_pair_dist(state);
    return r;
}

ClusterReport cluster_norms(const ParticleState& state, std::span<const std::size_t> cluster) {
    if (cluster.size() < 2) throw EmptyClusterError("a cluster needs at least two particles");
    for (std::size_t i : cluster)
        if (i >= state.n) throw EmptyClusterError("cluster index out of range");
    ClusterReport rep;
    rep.cluster.assign(cluster.begin(), cluster.end());
    double sx = 0.0, sv = 0.0;
    for (std::size_t a : cluster) {
        for (std::size_t b : cluster) {
            for (std::size_t k = 0; k < state.dim; ++k) {
                const double dx = state.x[a * state.dim + k] - state.x[b * state.dim + k];
                const double dv = state.v[a * state.dim + k] - state.v[b * state.dim + k];
                sx += dx * dx;
                sv += dv * dv;
            }
        }
    }
    rep.x_norm = std::sqrt(sx);
    rep.v_norm = std::sqrt(sv);
    if (rep.x_norm > 0.0)
        rep.ratio = rep.v_norm / rep.x_norm;
    else if (rep.v_norm > 0.0)
        rep.ratio = std::numeric_limits<double>::infinity();
    return rep;
}

double integrated_dissipation(const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const auto& a = traj.steps[k - 1].diag;
        const auto& b = traj.steps[k].diag;
        total += 0.5 * (b.t - a.t) * (a.dissipation_Dp + b.dissipation_Dp);
    }
    return total;
}

double energy_balance_residual(const Trajectory& traj, BalanceForm form) {
    if (traj.steps.size() < 2) throw DomainError("energy balance needs at least two samples");
    const double c = form == BalanceForm::Unit ? 1.0 : 0.5;
    const double drop = traj.steps.front().diag.energy_E - traj.steps.back().diag.energy_E;
    return std::abs(drop - c * integrated_dissipation(traj));
}

}  // namespace palign
