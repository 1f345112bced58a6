#include "palign/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "palign/errors.hpp"

namespace palign::oracle {

namespace {

using Vec2 = std::array<double, 2>;

Vec2 f(const Vec2& y, double alpha, double p) {
    if (!(y[0] > 0.0)) throw CollisionError("reduced system reached r <= 0");
    const double s = y[1];
    if (s == 0.0) return {0.0, 0.0};
    return {s, -s * std::pow(std::abs(s), p - 2.0) * std::pow(y[0], -alpha)};
}

Vec2 rk4(const Vec2& y, double h, double alpha, double p) {
    const Vec2 k1 = f(y, alpha, p);
    const Vec2 k2 = f({y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]}, alpha, p);
    const Vec2 k3 = f({y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]}, alpha, p);
    const Vec2 k4 = f({y[0] + h * k3[0], y[1] + h * k3[1]}, alpha, p);
    return {y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

bool finite2(const Vec2& y) { return std::isfinite(y[0]) && std::isfinite(y[1]); }

void require_collision_regime(const ModelParams& params, double r0) {
    if (!(params.alpha > 1.0) || !(params.p > params.alpha + 2.0))
        throw DomainError("closed-form collision needs alpha > 1 and p > alpha + 2");
    if (!(r0 > 0.0) || !std::isfinite(r0)) throw DomainError("r0 must be positive");
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", x);
    return buf;
}

}  // namespace

ReducedDerivative reduced_rhs(const ReducedState& s, const ModelParams& params) {
    const Vec2 d = f({s.r, s.rdot}, params.alpha, params.p);
    return {d[0], d[1]};
}

double matched_initial_velocity(double r0, const ModelParams& params) {
    require_collision_regime(params, r0);
    const double a = params.alpha, p = params.p;
    return -std::pow((p - 3.0) / (a - 1.0) * std::pow(r0, 1.0 - a), 1.0 / (3.0 - p));
}

double matched_initial_velocity_alpha1(double r0, const ModelParams& params) {
    if (params.alpha != 1.0 || !(params.p > 3.0)) throw DomainError("alpha = 1 branch needs alpha = 1 and p > 3");
    if (!(r0 > 0.0) || !(r0 < 1.0)) throw DomainError("alpha = 1 matched data needs 0 < r0 < 1");
    return -std::pow((params.p - 3.0) * -std::log(r0), -1.0 / (params.p - 3.0));
}

double collision_time(double r0, const ModelParams& params) {
    require_collision_regime(params, r0);
    const double a = params.alpha, p = params.p;
    const double beta = (a - 1.0) / (p - 3.0);
    const double k = std::pow((p - 3.0) / (a - 1.0), 1.0 / (3.0 - p));
    return std::pow(r0, 1.0 - beta) / ((1.0 - beta) * k);
}

double collision_bound_alpha1(double r0, const ModelParams& params) {
    if (params.alpha != 1.0 || !(params.p > 3.0)) throw DomainError("alpha = 1 branch needs alpha = 1 and p > 3");
    const double p = params.p;
    if (!(r0 > 0.0) || !(r0 < std::exp(-1.0 / (p - 3.0))))
        throw DomainError("alpha = 1 bound needs 0 < r0 < exp(-1/(p-3))");
    const double q = (3.0 - p) * std::log(r0);
    return r0 * std::pow(q, 1.0 / (p - 3.0)) / (1.0 - 1.0 / q);
}

ReducedRun integrate_reduced(const ReducedState& s0, const ModelParams& params, double t_end,
                             const ReducedOptions& opt) {
    const double a = params.alpha, p = params.p;
    if (!(s0.r > 0.0)) throw CollisionError("reduced system starts at r <= 0");
    ReducedRun run;
    run.min_r = s0.r;
    Vec2 y{s0.r, s0.rdot};
    double t = s0.t;
    double h = opt.dt_init;
    constexpr double kFloor = 1e-200;
    double vmax = 0.0;

    auto finish = [&](bool collided) {
        run.final = {t, y[0], y[1]};
        run.collided = collided;
        return run;
    };

    while (t < t_end) {
        if (run.steps >= opt.max_steps) throw StepStallError("reduced integration exceeded max_steps", t, h);
        h = std::min(h, t_end - t);
        if (!(h > std::abs(t) * 1e-16)) throw StepStallError("reduced integration step underflow", t, h);
        Vec2 full, half, two;
        bool ok = true;
        try {
            full = rk4(y, h, a, p);
            half = rk4(y, 0.5 * h, a, p);
            two = rk4(half, 0.5 * h, a, p);
            ok = finite2(full) && finite2(two) && two[0] > 0.0 && full[0] > 0.0;
        } catch (const CollisionError&) {
            ok = false;
        }
        if (!ok) {
            h *= 0.25;
            continue;
        }

        // For p < 2 the velocity reaches zero in finite time; the field is not smooth there, so the
        // crossing is located directly and the system parked at rest.
        if (p < 2.0 && y[1] != 0.0 && (two[1] == 0.0 || std::signbit(two[1]) != std::signbit(y[1]))) {
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
                const double mid = 0.5 * (lo + hi);
                const Vec2 m = rk4(y, mid * h, a, p);
                if (m[1] != 0.0 && std::signbit(m[1]) == std::signbit(y[1]))
                    lo = mid;
                else
                    hi = mid;
            }
            const Vec2 m = rk4(y, lo * h, a, p);
            t += lo * h;
            y = {m[0], 0.0};
            run.min_r = std::min(run.min_r, y[0]);
            ++run.steps;
            run.came_to_rest = true;
            t = t_end;
            return finish(false);
        }

        // Relative control on both components, except that for p < 2 the velocity is measured
        // against its largest magnitude so far: otherwise steps shrink geometrically as rdot -> 0
        // and never reach the crossing.
        vmax = std::max(vmax, std::abs(y[1]));
        double err = 0.0;
        for (int i = 0; i < 2; ++i) {
            double sc = opt.tol * std::max(std::abs(y[i]), std::abs(two[i])) + kFloor;
            if (i == 1 && p < 2.0) sc = std::max(sc, opt.tol * vmax);
            err = std::max(err, std::abs(two[i] - full[i]) / 15.0 / sc);
        }
        if (err <= 1.0) {
            const Vec2 prev = y;
            const double t_prev = t;
            y = {two[0] + (two[0] - full[0]) / 15.0, two[1] + (two[1] - full[1]) / 15.0};
            if (!(y[0] > 0.0)) y = two;
            t = (h == t_end - t) ? t_end : t + h;
            ++run.steps;
            run.min_r = std::min(run.min_r, y[0]);
            if (p < 2.0 && std::abs(y[1]) <= std::pow(opt.tol, 2.0 / 3.0) * vmax) {
                // Near the stopping time rdot ~ s^{1/(2-p)} in the remaining time s, so the distance
                // still to travel is below tol * r here. Stepping on only makes rdot chatter.
                y[1] = 0.0;
                run.came_to_rest = true;
                t = t_end;
                return finish(false);
            }
            if (y[0] < opt.r_stop) {
                double lo = 0.0, hi = 1.0;
                for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    Vec2 m;
                    bool below;
                    try {
                        m = rk4(prev, mid * h, a, p);
                        below = !(m[0] >= opt.r_stop);
                    } catch (const CollisionError&) {
                        below = true;
                    }
                    (below ? hi : lo) = mid;
                }
                const Vec2 m = rk4(prev, hi * h, a, p);
                t = t_prev + hi * h;
                y = m;
                run.t_stop = t;
                // Local power law rdot ~ r^b fitted on this step extrapolates the time still needed.
                double tail = y[0] / std::abs(y[1]);
                const double b = std::log(std::abs(y[1]) / std::abs(prev[1])) / std::log(y[0] / prev[0]);
                if (std::isfinite(b) && b >= 0.0 && b < 1.0) tail /= (1.0 - b);
                run.t_collision = t + (std::isfinite(tail) ? tail : 0.0);
                run.min_r = std::min(run.min_r, y[0]);
                return finish(true);
            }
        }
        const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        h *= std::clamp(fac, 0.2, 5.0);
    }
    return finish(false);
}

std::vector<SweepRow> collision_sweep(const SweepGrid& grid) {
    std::vector<SweepRow> rows;
    ReducedOptions opt;
    opt.tol = grid.tol;
    for (double a : grid.alpha)
        for (double off : grid.p_offset)
            for (double r0 : grid.r0) {
                SweepRow row;
                row.alpha = a;
                row.p = a + off;
                row.r0 = r0;
                ModelParams mp;
                mp.alpha = a;
                mp.p = row.p;
                mp.validate();
                if (row.p > a + 2.0 && a > 1.0) {
                    const double tc = collision_time(r0, mp);
                    const double v0 = matched_initial_velocity(r0, mp);
                    const ReducedRun run = integrate_reduced({0.0, r0, v0}, mp, std::max(grid.horizon, 4.0 * tc), opt);
                    row.tc_closed = fmt(tc);
                    if (run.collided) {
                        row.tc_integrated = fmt(run.t_collision);
                        row.rel_err_value = std::abs(run.t_collision - tc) / tc;
                        row.rel_err = fmt(row.rel_err_value);
                        row.consistent = row.rel_err_value <= 1e-6;
                    } else {
                        row.tc_integrated = "no-collision";
                        row.consistent = false;
                    }
                } else if (row.p > a + 2.0) {
                    if (!(r0 < std::exp(-1.0 / (row.p - 3.0)))) {
                        row.tc_closed = "out-of-domain";
                        row.tc_integrated = "out-of-domain";
                        rows.push_back(row);
                        continue;
                    }
                    const double bound = collision_bound_alpha1(r0, mp);
                    const double v0 = matched_initial_velocity_alpha1(r0, mp);
                    const ReducedRun run =
                        integrate_reduced({0.0, r0, v0}, mp, std::max(grid.horizon, 4.0 * bound), opt);
                    row.tc_closed = "<=" + fmt(bound);
                    if (run.collided) {
                        row.tc_integrated = fmt(run.t_collision);
                        const bool within = run.t_collision <= bound * (1.0 + 1e-9);
                        row.rel_err = within ? "within-bound" : "exceeds-bound";
                        row.consistent = within;
                    } else {
                        row.tc_integrated = "no-collision";
                        row.consistent = false;
                    }
                } else {
                    // Head-on approach at unit speed. For p = alpha + 2 this data decays like
                    // r0 exp(-t/r0), so only r reaching zero itself counts as a collision.
                    ReducedOptions strict = opt;
                    strict.r_stop = 0.0;
                    bool collided = false;
                    double t_hit = 0.0;
                    try {
                        const ReducedRun run = integrate_reduced({0.0, r0, -1.0}, mp, grid.horizon, strict);
                        collided = !(run.min_r > 0.0);
                    } catch (const StepStallError& e) {
                        collided = true;
                        t_hit = e.time();
                    }
                    row.tc_closed = "no-collision";
                    row.tc_integrated = collided ? fmt(t_hit) : "no-collision";
                    row.consistent = !collided;
                }
                rows.push_back(row);
            }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "alpha,p,r0,tc_closed,tc_integrated,rel_err\n";
    for (const auto& r : rows)
        out << fmt(r.alpha) << ',' << fmt(r.p) << ',' << fmt(r.r0) << ',' << r.tc_closed << ',' << r.tc_integrated
            << ',' << r.rel_err << '\n';
    return out.str();
}

std::vector<double> force_bruteforce(const ParticleState& state, const ModelParams& params) {
    const std::size_t n = state.n, d = state.dim;
    std::vector<double> acc(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double dx2 = 0.0, dv2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                dx2 += std::pow(state.x[j * d + k] - state.x[i * d + k], 2.0);
                dv2 += std::pow(state.v[j * d + k] - state.v[i * d + k], 2.0);
            }
            if (dv2 == 0.0) continue;
            const double r = std::sqrt(dx2 + params.reg_delta * params.reg_delta);
            const double w = std::pow(std::sqrt(dv2), params.p - 2.0) / std::pow(r, params.alpha);
            for (std::size_t k = 0; k < d; ++k)
                acc[i * d + k] += w * (state.v[j * d + k] - state.v[i * d + k]) / static_cast<double>(n);
        }
    return acc;
}

namespace {

struct Support {
    std::size_t k = 0;
    std::vector<double> z;
    std::vector<double> c;
    std::size_t size() const { return c.size(); }
    double dist(std::size_t i, std::size_t j) const {
        double s = 0.0;
        for (std::size_t a = 0; a < k; ++a) s += (z[i * k + a] - z[j * k + a]) * (z[i * k + a] - z[j * k + a]);
        return std::sqrt(s);
    }
};

// Plain concatenation; repeated points are left as separate atoms tied by a zero-distance constraint.
Support concat(const AtomicMeasure& mu, const AtomicMeasure& nu) {
    if (mu.dim != nu.dim) throw DomainError("measures of different dimension");
    Support s;
    s.k = mu.dim;
    s.z = mu.points;
    s.z.insert(s.z.end(), nu.points.begin(), nu.points.end());
    s.c = mu.weights;
    for (double w : nu.weights) s.c.push_back(-w);
    return s;
}

}  // namespace

double dbl_bruteforce(const AtomicMeasure& mu, const AtomicMeasure& nu, std::size_t n_random, std::uint64_t seed) {
    const Support s = concat(mu, nu);
    const std::size_t n = s.size();
    if (n == 0) return 0.0;
    std::vector<double> dist(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = s.dist(i, j);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> phi(n), fixed(n);
    double best = 0.0;
    for (std::size_t trial = 0; trial < n_random; ++trial) {
        const bool vertex = coin(rng);
        for (auto& a : phi) a = vertex ? (coin(rng) ? 1.0 : -1.0) : uni(rng);
        // A few sweeps of pairwise projection towards the Lipschitz set.
        for (int sweep = 0; sweep < 3; ++sweep)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double gap = phi[i] - phi[j], lim = dist[i * n + j];
                    if (std::abs(gap) > lim) {
                        const double mid = 0.5 * (phi[i] + phi[j]);
                        const double half = 0.5 * lim * (gap > 0 ? 1.0 : -1.0);
                        phi[i] = mid + half;
                        phi[j] = mid - half;
                    }
                }
        // Exact repair: the inf-convolution with the distance is 1-Lipschitz; clamping keeps it so.
        for (std::size_t i = 0; i < n; ++i) {
            double m = phi[i];
            for (std::size_t j = 0; j < n; ++j) m = std::min(m, phi[j] + dist[i * n + j]);
            fixed[i] = std::clamp(m, -1.0, 1.0);
        }
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) obj += s.c[i] * fixed[i];
        best = std::max(best, std::abs(obj));
    }
    return best;
}

double dbl_simplex_reference(const AtomicMeasure& mu, const AtomicMeasure& nu) {
    const Support s = concat(mu, nu);
    const std::size_t n = s.size();
    if (n == 0) return 0.0;
    // Variables y = phi + 1 in [0, 2]. Rows: y_i - y_j <= D_ij for ordered pairs, y_i <= 2.
    const std::size_t m = n * (n - 1) + n;
    std::vector<double> A(m * n, 0.0), b(m);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            A[r * n + i] = 1.0;
            A[r * n + j] = -1.0;
            b[r] = s.dist(i, j);
            ++r;
        }
    for (std::size_t i = 0; i < n; ++i, ++r) {
        A[r * n + i] = 1.0;
        b[r] = 2.0;
    }
    // Dictionary form: x_B = b - A x_N, z = z0 + c x_N. Labels 0..n-1 are y, n.. are slacks.
    std::vector<double> c(s.c);
    double z0 = 0.0;
    std::vector<std::size_t> nonbasic(n), basic(m);
    for (std::size_t j = 0; j < n; ++j) nonbasic[j] = j;
    for (std::size_t i = 0; i < m; ++i) basic[i] = n + i;
    constexpr double eps = 1e-12;
    for (std::size_t iter = 0;; ++iter) {
        if (iter > 1'000'000) throw SolverToleranceError("reference simplex did not terminate");
        std::size_t e = n;
        for (std::size_t j = 0; j < n; ++j)
            if (c[j] > eps && (e == n || nonbasic[j] < nonbasic[e])) e = j;
        if (e == n) break;
        std::size_t leave = m;
        double ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            const double aie = A[i * n + e];
            if (aie <= eps) continue;
            const double q = b[i] / aie;
            if (q < ratio - 1e-15 || (std::abs(q - ratio) <= 1e-15 && basic[i] < basic[leave])) {
                ratio = q;
                leave = i;
            }
        }
        if (leave == m) throw SolverToleranceError("reference simplex found an unbounded ray");
        double* row = &A[leave * n];
        const double piv = row[e];
        b[leave] /= piv;
        for (std::size_t j = 0; j < n; ++j) row[j] = (j == e) ? 1.0 / piv : row[j] / piv;
        for (std::size_t i = 0; i < m; ++i) {
            if (i == leave) continue;
            double* ri = &A[i * n];
            const double a = ri[e];
            if (a == 0.0) continue;
            b[i] -= a * b[leave];
            for (std::size_t j = 0; j < n; ++j) ri[j] = (j == e) ? -a * row[e] : ri[j] - a * row[j];
        }
        const double ce = c[e];
        z0 += ce * b[leave];
        for (std::size_t j = 0; j < n; ++j) c[j] = (j == e) ? -ce * row[e] : c[j] - ce * row[j];
        std::swap(nonbasic[e], basic[leave]);
    }
    double csum = 0.0;
    for (double a : s.c) csum += a;
    return z0 - csum;
}

}  // namespace palign::oracle
