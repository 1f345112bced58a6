#include "palign/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "palign/errors.hpp"
#include "palign/kernels.hpp"

namespace palign {

void IntegratorConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw DomainError("tolerances must be positive");
    if (!(dt_min > 0.0) || !(dt_init > 0.0) || !(dt_max > 0.0)) throw DomainError("step bounds must be positive");
    if (!(dt_min <= dt_init && dt_init <= dt_max)) throw DomainError("need dt_min <= dt_init <= dt_max");
    if (!(kappa > 0.0 && kappa <= 1.0)) throw DomainError("kappa must lie in (0, 1]");
    if (collision_eps && !(*collision_eps > 0.0)) throw DomainError("collision_eps must be positive");
    if (!(nonsmooth_floor >= 0.0 && nonsmooth_floor <= dt_max))
        throw DomainError("nonsmooth_floor must lie in [0, dt_max]");
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// PI controller constants (Hairer-Wanner).
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kSafe = 0.9;
constexpr double kFacShrink = 5.0;   // 1 / minimum factor
constexpr double kFacGrow = 0.1;     // 1 / maximum factor

}  // namespace

Dopri5::Dopri5(Rhs rhs, const IntegratorConfig& config, Limiter limiter)
    : rhs_(std::move(rhs)), cfg_(config), limiter_(std::move(limiter)), h_(config.dt_init) {
    cfg_.validate();
}

bool Dopri5::try_stages(double t, std::span<const double> y, double h) {
    const std::size_t n = y.size();
    auto combo = [&](std::initializer_list<std::pair<int, double>> terms) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (const auto& [k, a] : terms) s += a * k_[k][i];
            tmp_[i] = y[i] + h * s;
        }
    };
    try {
        if (!fsal_valid_) {
            rhs_(t, y, k_[0]);
            fsal_valid_ = true;
        }
        combo({{0, a21}});
        rhs_(t + c2 * h, tmp_, k_[1]);
        combo({{0, a31}, {1, a32}});
        rhs_(t + c3 * h, tmp_, k_[2]);
        combo({{0, a41}, {1, a42}, {2, a43}});
        rhs_(t + c4 * h, tmp_, k_[3]);
        combo({{0, a51}, {1, a52}, {2, a53}, {3, a54}});
        rhs_(t + c5 * h, tmp_, k_[4]);
        combo({{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}});
        rhs_(t + h, tmp_, k_[5]);
        for (std::size_t i = 0; i < n; ++i)
            ynew_[i] = y[i] + h * (b1 * k_[0][i] + b3 * k_[2][i] + b4 * k_[3][i] + b5 * k_[4][i] + b6 * k_[5][i]);
        rhs_(t + h, ynew_, k_[6]);
    } catch (const CollisionError&) {
        return false;
    } catch (const NonFiniteError&) {
        return false;
    }
    return true;
}

Dopri5::Step Dopri5::step(double& t, std::vector<double>& y, double t_limit) {
    const std::size_t n = y.size();
    for (auto& k : k_) k.resize(n);
    tmp_.resize(n);
    ynew_.resize(n);

    double h = std::max(h_, cfg_.nonsmooth_floor);
    for (;;) {
        const double remaining = t_limit - t;
        double bound = std::min(cfg_.dt_max, remaining);
        if (limiter_) bound = std::min(bound, limiter_(t, y));
        h = std::min(h, bound);
        const double floor = std::min(cfg_.nonsmooth_floor, bound);
        if (h < cfg_.dt_min && h < remaining)
            throw StepStallError("step size " + std::to_string(h) + " below dt_min at t=" + std::to_string(t), t, h);
        if (!(h > 0.0)) throw StepStallError("non-positive step at t=" + std::to_string(t), t, h);

        if (!try_stages(t, y, h)) {
            ++rejected_;
            fsal_valid_ = false;
            h *= 0.25;
            continue;
        }

        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = h * (e1 * k_[0][i] + e3 * k_[2][i] + e4 * k_[3][i] + e5 * k_[4][i] +
                                  e6 * k_[5][i] + e7 * k_[6][i]);
            const double sk = cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
            err += (e / sk) * (e / sk);
        }
        err = std::sqrt(err / static_cast<double>(n));
        bool finite = std::isfinite(err);
        for (std::size_t i = 0; finite && i < n; ++i) finite = std::isfinite(ynew_[i]);
        if (!finite) {
            ++rejected_;
            h *= 0.25;
            continue;
        }

        const double fac11 = std::pow(err, kExpo);
        const bool at_floor = floor > 0.0 && h == floor;
        if (err <= 1.0 || at_floor) {
            if (err > 1.0) ++floored_;
            double fac = fac11 / std::pow(facold_, kBeta);
            fac = std::clamp(fac / kSafe, kFacGrow, kFacShrink);
            facold_ = std::max(err, 1e-4);
            t = (h == remaining) ? t_limit : t + h;
            y.swap(ynew_);
            std::swap(k_[0], k_[6]);
            ++accepted_;
            h_ = std::min(h / fac, cfg_.dt_max);
            return {h, err};
        }
        ++rejected_;
        h = std::max(h / std::min(kFacShrink, fac11 / kSafe), floor);
    }
}

std::string to_string(EventKind kind) {
    switch (kind) {
        case EventKind::Collision: return "Collision";
        case EventKind::StallMinDt: return "StallMinDt";
    }
    return "Unknown";
}

bool Trajectory::collided() const {
    return std::any_of(events.begin(), events.end(), [](const Event& e) { return e.kind == EventKind::Collision; });
}

namespace {

kernels::PairExtrema extrema_of(std::span<const double> y, const ModelParams& params, ForceWorkspace& ws) {
    const std::size_t nd = params.n_particles * params.dim;
    ws.load(y.subspan(0, nd), y.subspan(nd, nd), params.n_particles, params.dim);
    return kernels::active().extrema({ws.xs(), ws.vs(), params.n_particles, params.dim});
}

}  // namespace

namespace {

IntegratorConfig effective(const IntegratorConfig& config, const ModelParams& params) {
    IntegratorConfig c = config;
    if (params.p >= 2.0) c.nonsmooth_floor = 0.0;
    return c;
}

}  // namespace

ParticleIntegrator::ParticleIntegrator(const ModelParams& params, const IntegratorConfig& config,
                                       const ParticleState& state0)
    : params_(params),
      cfg_(effective(config, params)),
      stepper_(
          [this](double, std::span<const double> y, std::span<double> dy) {
              const std::size_t nd = params_.n_particles * params_.dim;
              std::copy(y.begin() + nd, y.end(), dy.begin());
              pairwise_force(y.subspan(0, nd), y.subspan(nd, nd), params_, ws_, dy.subspan(nd, nd));
          },
          cfg_, [this](double, std::span<const double> y) { return limit(y); }),
      t_(state0.t) {
    params_.validate();
    check_state(state0, params_);
    y_.reserve(2 * state0.x.size());
    y_.insert(y_.end(), state0.x.begin(), state0.x.end());
    y_.insert(y_.end(), state0.v.begin(), state0.v.end());
    d_min_ = std::sqrt(extrema_of(y_, params_, limiter_ws_).min_dist_sq);
}

double ParticleIntegrator::limit(std::span<const double> y) {
    const auto e = extrema_of(y, params_, limiter_ws_);
    d_min_ = std::sqrt(e.min_dist_sq);
    if (params_.reg_delta > 0.0 || !std::isfinite(e.min_contact_sq)) return std::numeric_limits<double>::infinity();
    return cfg_.kappa * std::sqrt(e.min_contact_sq);
}

Dopri5::Step ParticleIntegrator::step(double t_limit) {
    const auto s = stepper_.step(t_, y_, t_limit);
    d_min_ = std::sqrt(extrema_of(y_, params_, limiter_ws_).min_dist_sq);
    return s;
}

void ParticleIntegrator::advance_to(double t_target) {
    while (t_ < t_target) {
        if (stepper_.accepted() >= cfg_.max_steps) throw Error("max_steps exceeded");
        step(t_target);
    }
}

ParticleState ParticleIntegrator::state() const {
    ParticleState s(params_.n_particles, params_.dim, t_);
    const std::size_t nd = s.x.size();
    std::copy(y_.begin(), y_.begin() + static_cast<std::ptrdiff_t>(nd), s.x.begin());
    std::copy(y_.begin() + static_cast<std::ptrdiff_t>(nd), y_.end(), s.v.begin());
    return s;
}

StepOutcome step_adaptive(const ParticleState& state, const ModelParams& params, const IntegratorConfig& config) {
    ParticleIntegrator integ(params, config, state);
    const auto s = integ.step(std::numeric_limits<double>::infinity());
    return {integ.state(), s.dt, s.err};
}

Trajectory run(const ParticleState& state0, const ModelParams& params, const IntegratorConfig& config,
               double t_end, std::size_t observer_stride, const Observer& observer) {
    params.validate();
    config.validate();
    check_state(state0, params);
    if (t_end < state0.t) throw DomainError("t_end precedes the initial time");
    if (observer_stride == 0) observer_stride = 1;

    Trajectory traj;
    traj.params = params;
    traj.config = config;

    const double d0 = min_pair_dist(state0);
    if (params.reg_delta == 0.0 && d0 == 0.0) throw CollisionError("initial data is collisional");
    if (!traj.config.collision_eps) traj.config.collision_eps = 1e-8 * d0;
    const double eps = *traj.config.collision_eps;
    traj.min_pair_dist_seen = d0;

    auto record = [&](const ParticleState& s, double dt, double err) {
        TrajectoryStep st{s, dt, err, diagnose(s, params)};
        if (observer) observer(st);
        traj.steps.push_back(std::move(st));
    };
    record(state0, 0.0, 0.0);
    if (t_end == state0.t) return traj;

    ParticleIntegrator integ(params, traj.config, state0);
    std::size_t since_sample = 0;
    while (integ.time() < t_end) {
        if (integ.accepted() >= config.max_steps) throw Error("max_steps exceeded");
        Dopri5::Step s;
        try {
            s = integ.step(t_end);
        } catch (const StepStallError& e) {
            traj.events.push_back({e.time(), EventKind::StallMinDt, e.what()});
            if (since_sample > 0) record(integ.state(), 0.0, 0.0);
            break;
        }
        ++since_sample;
        traj.min_pair_dist_seen = std::min(traj.min_pair_dist_seen, integ.min_pair_dist());
        const bool collided = integ.min_pair_dist() < eps;
        if (since_sample >= observer_stride || integ.time() >= t_end || collided) {
            record(integ.state(), s.dt, s.err);
            since_sample = 0;
        }
        if (collided) {
            traj.events.push_back({integ.time(), EventKind::Collision,
                                   "min pair distance " + std::to_string(integ.min_pair_dist())});
            break;
        }
    }
    traj.accepted_steps = integ.accepted();
    traj.rejected_steps = integ.rejected();
    traj.floored_steps = integ.floored();
    return traj;
}

}  // namespace palign
