#include "palign/meanfield.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "palign/diagnostics.hpp"
#include "palign/errors.hpp"
#include "palign/io.hpp"

namespace palign {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        spare_ = rad * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return rad * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::vector<double> center_or_origin(const std::vector<double>& c, std::size_t d) {
    if (c.empty()) return std::vector<double>(d, 0.0);
    if (c.size() != d) throw DomainError("density center has the wrong dimension");
    return c;
}

void check_density(const DensitySpec& rho, std::size_t d) {
    using K = DensitySpec::Kind;
    switch (rho.kind) {
    case K::UniformBox:
        if (rho.lo.size() != d || rho.hi.size() != d) throw DomainError("box bounds have the wrong dimension");
        for (std::size_t k = 0; k < d; ++k) {
            if (!std::isfinite(rho.lo[k]) || !std::isfinite(rho.hi[k]) || rho.hi[k] < rho.lo[k])
                throw DomainError("box needs finite lo <= hi");
            if (rho.hi[k] == rho.lo[k]) throw DegenerateSupportError("uniform box has zero volume");
        }
        break;
    case K::UniformBall:
        center_or_origin(rho.center, d);
        if (!std::isfinite(rho.radius) || rho.radius < 0.0) throw DomainError("ball radius must be finite and >= 0");
        if (rho.radius == 0.0) throw DegenerateSupportError("uniform ball has zero radius");
        break;
    case K::TruncatedGaussian:
        center_or_origin(rho.center, d);
        if (!std::isfinite(rho.sigma) || rho.sigma < 0.0 || !std::isfinite(rho.radius) || rho.radius < 0.0)
            throw DomainError("gaussian needs finite sigma >= 0 and radius >= 0");
        if (rho.sigma == 0.0 || rho.radius == 0.0) throw DegenerateSupportError("truncated gaussian is a point mass");
        break;
    case K::Mixture:
        if (rho.components.empty()) throw DomainError("mixture without components");
        if (!rho.mix_weights.empty() && rho.mix_weights.size() != rho.components.size())
            throw DomainError("mixture weights and components differ in number");
        for (double w : rho.mix_weights)
            if (!std::isfinite(w) || w < 0.0) throw DomainError("mixture weights must be finite and >= 0");
        if (!rho.mix_weights.empty() &&
            std::all_of(rho.mix_weights.begin(), rho.mix_weights.end(), [](double w) { return w == 0.0; }))
            throw DomainError("mixture weights sum to zero");
        for (const auto& c : rho.components) check_density(c, d);
        break;
    }
}

void draw(const DensitySpec& rho, std::size_t d, Sampler& s, std::span<double> out) {
    using K = DensitySpec::Kind;
    switch (rho.kind) {
    case K::UniformBox:
        for (std::size_t k = 0; k < d; ++k) out[k] = rho.lo[k] + (rho.hi[k] - rho.lo[k]) * s.uniform();
        return;
    case K::UniformBall: {
        const auto c = center_or_origin(rho.center, d);
        for (;;) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                out[k] = 2.0 * s.uniform() - 1.0;
                r2 += out[k] * out[k];
            }
            if (r2 <= 1.0) break;
        }
        for (std::size_t k = 0; k < d; ++k) out[k] = c[k] + rho.radius * out[k];
        return;
    }
    case K::TruncatedGaussian: {
        const auto c = center_or_origin(rho.center, d);
        const double lim = (rho.radius / rho.sigma) * (rho.radius / rho.sigma);
        for (;;) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                out[k] = s.normal();
                r2 += out[k] * out[k];
            }
            if (r2 <= lim) break;
        }
        for (std::size_t k = 0; k < d; ++k) out[k] = c[k] + rho.sigma * out[k];
        return;
    }
    case K::Mixture: {
        const std::size_t m = rho.components.size();
        std::vector<double> w = rho.mix_weights.empty() ? std::vector<double>(m, 1.0) : rho.mix_weights;
        double total = 0.0;
        for (double a : w) total += a;
        double u = s.uniform() * total;
        std::size_t pick = m - 1;
        for (std::size_t c = 0; c < m; ++c) {
            if (u < w[c]) {
                pick = c;
                break;
            }
            u -= w[c];
        }
        while (w[pick] == 0.0) --pick;  // roundoff can land past the last positive weight
        draw(rho.components[pick], d, s, out);
        return;
    }
    }
}

double time_factor(double t, double horizon, int k, double& dt) {
    const double s = 1.0 - t / horizon;
    dt = -static_cast<double>(k) / horizon * std::pow(s, k - 1);
    return std::pow(s, k);
}

}  // namespace

std::uint64_t replica_seed(std::uint64_t base, std::uint64_t replica) {
    return splitmix64(base ^ splitmix64(replica + 0x51ed));
}

std::vector<double> evaluate_u0(const VelocitySpec& u0, std::span<const double> x) {
    const std::size_t d = x.size();
    std::vector<double> v(d, 0.0);
    using K = VelocitySpec::Kind;
    switch (u0.kind) {
    case K::Constant:
        if (u0.value.size() != d) throw DomainError("constant velocity has the wrong dimension");
        v = u0.value;
        break;
    case K::Linear:
        if (!u0.matrix.empty() && u0.matrix.size() != d * d) throw DomainError("linear velocity matrix must be d x d");
        if (!u0.value.empty() && u0.value.size() != d) throw DomainError("linear velocity offset has the wrong dimension");
        for (std::size_t a = 0; a < d; ++a) {
            double s = u0.value.empty() ? 0.0 : u0.value[a];
            if (!u0.matrix.empty())
                for (std::size_t b = 0; b < d; ++b) s += u0.matrix[a * d + b] * x[b];
            v[a] = s;
        }
        break;
    case K::Shear:
        if (d < 2) throw DomainError("shear velocity needs dimension >= 2");
        v[0] = u0.rate * x[1];
        break;
    case K::TwoCluster: {
        const bool left = x[0] < u0.split;
        // Diverging data sends the left cluster towards -e_0.
        const double sign = (left == u0.converging) ? 1.0 : -1.0;
        v[0] = sign * u0.speed;
        break;
    }
    }
    for (double a : v)
        if (!std::isfinite(a)) throw DomainError("initial velocity is not finite");
    return v;
}

ParticleState atomize(const InitialDataSpec& spec, std::size_t n) {
    if (n < 2) throw DomainError("atomize needs N >= 2");
    if (spec.dim < 1) throw DomainError("dimension must be >= 1");
    check_density(spec.rho0, spec.dim);
    const std::size_t d = spec.dim;
    Sampler s(splitmix64(spec.seed ^ splitmix64(n)));
    ParticleState st(n, d, 0.0);
    std::set<std::vector<double>> seen;
    std::vector<double> z(d);
    constexpr int kMaxRedraws = 1000;
    for (std::size_t i = 0; i < n; ++i) {
        int tries = 0;
        for (;;) {
            draw(spec.rho0, d, s, z);
            if (seen.insert(z).second) break;
            if (++tries > kMaxRedraws) throw DegenerateSupportError("cannot draw distinct positions from rho0");
        }
        std::copy(z.begin(), z.end(), st.pos(i).begin());
        const auto v = evaluate_u0(spec.u0, z);
        std::copy(v.begin(), v.end(), st.vel(i).begin());
    }
    return st;
}

ParticleState random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed, double half_width, double speed) {
    if (n < 2 || dim < 1) throw DomainError("random cloud needs N >= 2 and d >= 1");
    if (!(half_width > 0.0) || !std::isfinite(half_width)) throw DegenerateSupportError("random cloud box has zero volume");
    if (!(speed >= 0.0) || !std::isfinite(speed)) throw DomainError("random cloud speed must be finite and >= 0");
    Sampler s(splitmix64(seed ^ splitmix64(n ^ 0xc10dULL)));
    ParticleState st(n, dim, 0.0);
    std::set<std::vector<double>> seen;
    std::vector<double> z(dim);
    for (std::size_t i = 0; i < n; ++i) {
        do {
            for (auto& a : z) a = half_width * (2.0 * s.uniform() - 1.0);
        } while (!seen.insert(z).second);
        std::copy(z.begin(), z.end(), st.pos(i).begin());
        for (auto& a : st.vel(i)) a = speed * (2.0 * s.uniform() - 1.0);
    }
    return st;
}

// Test banks ---------------------------------------------------------------------------------------

std::vector<KineticTest> kinetic_test_bank(std::size_t dim, double horizon) {
    if (!(horizon > 0.0)) throw DomainError("test bank horizon must be positive");
    const double T = horizon;
    std::vector<KineticTest> bank;
    bank.push_back({"mass", [T](double t, auto, auto, double& phi, double& dt, auto gx, auto gv) {
                        phi = time_factor(t, T, 1, dt);
                        std::fill(gx.begin(), gx.end(), 0.0);
                        std::fill(gv.begin(), gv.end(), 0.0);
                    }});
    bank.push_back({"v0", [T](double t, auto, auto v, double& phi, double& dt, auto gx, auto gv) {
                        double tp = 0.0;
                        const double tau = time_factor(t, T, 2, tp);
                        phi = tau * v[0];
                        dt = tp * v[0];
                        std::fill(gx.begin(), gx.end(), 0.0);
                        std::fill(gv.begin(), gv.end(), 0.0);
                        gv[0] = tau;
                    }});
    bank.push_back({"speed2", [T](double t, auto, auto v, double& phi, double& dt, auto gx, auto gv) {
                        double tp = 0.0;
                        const double tau = time_factor(t, T, 2, tp);
                        double s = 0.0;
                        for (double a : v) s += a * a;
                        phi = tau * s;
                        dt = tp * s;
                        std::fill(gx.begin(), gx.end(), 0.0);
                        for (std::size_t k = 0; k < v.size(); ++k) gv[k] = 2.0 * tau * v[k];
                    }});
    bank.push_back({"bump_x", [T](double t, auto x, auto, double& phi, double& dt, auto gx, auto gv) {
                        double tp = 0.0;
                        const double tau = time_factor(t, T, 2, tp);
                        double r2 = 0.0;
                        for (double a : x) r2 += a * a;
                        const double g = std::exp(-0.5 * r2);
                        phi = tau * g;
                        dt = tp * g;
                        for (std::size_t k = 0; k < x.size(); ++k) gx[k] = -x[k] * phi;
                        std::fill(gv.begin(), gv.end(), 0.0);
                    }});
    bank.push_back({"bump_xv", [T](double t, auto x, auto v, double& phi, double& dt, auto gx, auto gv) {
                        double tp = 0.0;
                        const double tau = time_factor(t, T, 2, tp);
                        double r2 = 0.0;
                        for (double a : x) r2 += a * a;
                        for (double a : v) r2 += a * a;
                        const double g = std::exp(-0.5 * r2);
                        const double lin = 1.0 + x[0];
                        phi = tau * lin * g;
                        dt = tp * lin * g;
                        for (std::size_t k = 0; k < x.size(); ++k) gx[k] = tau * g * ((k == 0 ? 1.0 : 0.0) - lin * x[k]);
                        for (std::size_t k = 0; k < v.size(); ++k) gv[k] = -v[k] * phi;
                    }});
    (void)dim;
    return bank;
}

MacroTestBank macro_constant_bank(std::size_t dim, double horizon) {
    if (!(horizon > 0.0)) throw DomainError("test bank horizon must be positive");
    const double T = horizon;
    MacroTestBank bank;
    bank.scalar.push_back({"mass", [T](double t, auto, double& phi, double& dt, auto grad) {
                               phi = time_factor(t, T, 1, dt);
                               std::fill(grad.begin(), grad.end(), 0.0);
                           }});
    for (std::size_t a = 0; a < dim; ++a)
        bank.vector.push_back({"e" + std::to_string(a), [T, a](double t, auto, auto phi, auto dt, auto jac) {
                                   double tp = 0.0;
                                   const double tau = time_factor(t, T, 1, tp);
                                   std::fill(phi.begin(), phi.end(), 0.0);
                                   std::fill(dt.begin(), dt.end(), 0.0);
                                   std::fill(jac.begin(), jac.end(), 0.0);
                                   phi[a] = tau;
                                   dt[a] = tp;
                               }});
    return bank;
}

MacroTestBank macro_test_bank(std::size_t dim, double horizon) {
    MacroTestBank bank = macro_constant_bank(dim, horizon);
    const double T = horizon;
    bank.scalar.push_back({"bump", [T](double t, auto x, double& phi, double& dt, auto grad) {
                               double tp = 0.0;
                               const double tau = time_factor(t, T, 2, tp);
                               double r2 = 0.0;
                               for (double a : x) r2 += a * a;
                               const double g = std::exp(-0.5 * r2);
                               phi = tau * g;
                               dt = tp * g;
                               for (std::size_t k = 0; k < x.size(); ++k) grad[k] = -x[k] * phi;
                           }});
    bank.scalar.push_back({"x0", [T](double t, auto x, double& phi, double& dt, auto grad) {
                               double tp = 0.0;
                               const double tau = time_factor(t, T, 2, tp);
                               phi = tau * x[0];
                               dt = tp * x[0];
                               std::fill(grad.begin(), grad.end(), 0.0);
                               grad[0] = tau;
                           }});
    bank.vector.push_back({"bump_e0", [T](double t, auto x, auto phi, auto dt, auto jac) {
                               const std::size_t d = x.size();
                               double tp = 0.0;
                               const double tau = time_factor(t, T, 2, tp);
                               double r2 = 0.0;
                               for (double a : x) r2 += a * a;
                               const double g = std::exp(-0.5 * r2);
                               std::fill(phi.begin(), phi.end(), 0.0);
                               std::fill(dt.begin(), dt.end(), 0.0);
                               std::fill(jac.begin(), jac.end(), 0.0);
                               phi[0] = tau * g;
                               dt[0] = tp * g;
                               for (std::size_t b = 0; b < d; ++b) jac[b] = -x[b] * phi[0];
                           }});
    bank.vector.push_back({"position", [T](double t, auto x, auto phi, auto dt, auto jac) {
                               const std::size_t d = x.size();
                               double tp = 0.0;
                               const double tau = time_factor(t, T, 2, tp);
                               std::fill(jac.begin(), jac.end(), 0.0);
                               for (std::size_t a = 0; a < d; ++a) {
                                   phi[a] = tau * x[a];
                                   dt[a] = tp * x[a];
                                   jac[a * d + a] = tau;
                               }
                           }});
    return bank;
}

// Residuals ----------------------------------------------------------------------------------------

namespace {

double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
    double s = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
    return s;
}

void require_samples(const Trajectory& traj) {
    if (traj.steps.size() < 2) throw DomainError("weak-form residuals need at least two samples");
}

/// Per-particle velocity replaced by its cell mean.
struct CellVelocities {
    std::vector<double> u;  // N x d
    std::vector<std::size_t> cell;
    double energy = 0.0;    // sum_c m_c |u_c|^2
};

CellVelocities cell_velocities(const ParticleState& s, double h) {
    const auto lf = local_field(empirical(s), h);
    CellVelocities cv;
    cv.u.resize(s.n * s.dim);
    cv.cell = lf.atom_cell;
    for (std::size_t i = 0; i < s.n; ++i) {
        const auto& m = lf.cells[lf.atom_cell[i]].mean_velocity;
        std::copy(m.begin(), m.end(), cv.u.begin() + static_cast<std::ptrdiff_t>(i * s.dim));
    }
    for (const auto& c : lf.cells) {
        double u2 = 0.0;
        for (double a : c.mean_velocity) u2 += a * a;
        cv.energy += c.mass * u2;
    }
    return cv;
}

/// Visits ordered pairs i != j outside the excluded diagonal neighbourhood with the kernel
/// |u_i - u_j|^{q-2} / r_ij^alpha; returns the excluded mass (1/N^2 per ordered pair).
template <class F>
double for_kept_pairs(const ParticleState& s, const CellVelocities& cv, const ModelParams& params, double h, double q,
                      F&& visit) {
    const std::size_t n = s.n, d = s.dim;
    const double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    double excluded = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dx2 = 0.0, du2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double a = s.x[i * d + k] - s.x[j * d + k];
                const double b = cv.u[i * d + k] - cv.u[j * d + k];
                dx2 += a * a;
                du2 += b * b;
            }
            if (cv.cell[i] == cv.cell[j] && std::sqrt(dx2) < h) {
                excluded += 2.0 * inv;
                continue;
            }
            if (du2 == 0.0) continue;
            const double r2 = dx2 + params.reg_delta * params.reg_delta;
            if (r2 == 0.0) throw CollisionError("coincident positions in a macroscopic double integral");
            const double w = std::pow(du2, 0.5 * (q - 2.0)) * std::pow(r2, -0.5 * params.alpha) * inv;
            visit(i, j, w);
        }
    return excluded;
}

}  // namespace

std::vector<WeakResidual> weak_residual_kinetic(const Trajectory& traj, const std::vector<KineticTest>& bank) {
    require_samples(traj);
    const std::size_t m = traj.steps.size();
    const std::size_t d = traj.params.dim;
    std::vector<double> times(m);
    std::vector<std::vector<double>> integrand(bank.size(), std::vector<double>(m, 0.0));
    std::vector<double> first(bank.size()), last(bank.size());
    ForceWorkspace ws;
    std::vector<double> acc, gx(d), gv(d);
    for (std::size_t k = 0; k < m; ++k) {
        const auto& s = traj.steps[k].state;
        times[k] = s.t;
        acc.assign(s.n * d, 0.0);
        pairwise_force(s.x, s.v, traj.params, ws, acc);
        const double inv_n = 1.0 / static_cast<double>(s.n);
        for (std::size_t b = 0; b < bank.size(); ++b) {
            double sum_phi = 0.0, sum_rate = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                double phi = 0.0, dphi = 0.0;
                bank[b].eval(s.t, s.pos(i), s.vel(i), phi, dphi, gx, gv);
                double rate = dphi;
                for (std::size_t a = 0; a < d; ++a) rate += s.v[i * d + a] * gx[a] + gv[a] * acc[i * d + a];
                sum_phi += phi;
                sum_rate += rate;
            }
            integrand[b][k] = sum_rate * inv_n;
            if (k == 0) first[b] = sum_phi * inv_n;
            if (k + 1 == m) last[b] = sum_phi * inv_n;
        }
    }
    std::vector<WeakResidual> out;
    for (std::size_t b = 0; b < bank.size(); ++b)
        out.push_back({bank[b].name, std::abs(last[b] - first[b] - trapezoid(times, integrand[b])), 0.0});
    return out;
}

std::vector<WeakResidual> weak_residual_macro(const Trajectory& traj, double h, const MacroTestBank& bank) {
    require_samples(traj);
    if (!(h > 0.0)) throw DomainError("cell size must be positive");
    const std::size_t m = traj.steps.size();
    const std::size_t d = traj.params.dim;
    const std::size_t ns = bank.scalar.size(), nv = bank.vector.size();
    std::vector<double> times(m);
    std::vector<std::vector<double>> f(ns + nv, std::vector<double>(m, 0.0));
    std::vector<double> first(ns + nv), last(ns + nv);
    double excluded_max = 0.0;
    std::vector<double> grad(d), phi(d), dphi(d), jac(d * d);
    std::vector<double> phis;  // n x d vector test values for the pair sum
    for (std::size_t k = 0; k < m; ++k) {
        const auto& s = traj.steps[k].state;
        times[k] = s.t;
        const auto cv = cell_velocities(s, h);
        const double inv_n = 1.0 / static_cast<double>(s.n);
        auto boundary = [&](std::size_t b, double value) {
            if (k == 0) first[b] = value;
            if (k + 1 == m) last[b] = value;
        };
        for (std::size_t b = 0; b < ns; ++b) {
            double sp = 0.0, rate = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                double p0 = 0.0, pt = 0.0;
                bank.scalar[b].eval(s.t, s.pos(i), p0, pt, grad);
                double r = pt;
                for (std::size_t a = 0; a < d; ++a) r += grad[a] * cv.u[i * d + a];
                sp += p0;
                rate += r;
            }
            boundary(b, sp * inv_n);
            f[b][k] = rate * inv_n;
        }
        for (std::size_t b = 0; b < nv; ++b) {
            phis.assign(s.n * d, 0.0);
            double sp = 0.0, rate = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                bank.vector[b].eval(s.t, s.pos(i), phi, dphi, jac);
                const double* u = &cv.u[i * d];
                for (std::size_t a = 0; a < d; ++a) {
                    sp += phi[a] * u[a];
                    double conv = 0.0;
                    for (std::size_t c = 0; c < d; ++c) conv += u[c] * jac[a * d + c];
                    rate += dphi[a] * u[a] + u[a] * conv;
                    phis[i * d + a] = phi[a];
                }
            }
            // Alignment term: d/dt int phi . u = transport - (1/2) int int (phi - phi') . (u - u') K.
            double align = 0.0;
            const double ex = for_kept_pairs(s, cv, traj.params, h, traj.params.p,
                                             [&](std::size_t i, std::size_t j, double w) {
                                                 double dot = 0.0;
                                                 for (std::size_t a = 0; a < d; ++a)
                                                     dot += (phis[i * d + a] - phis[j * d + a]) *
                                                            (cv.u[i * d + a] - cv.u[j * d + a]);
                                                 align += dot * w;  // unordered pair, halves cancel
                                             });
            excluded_max = std::max(excluded_max, ex);
            boundary(ns + b, sp * inv_n);
            f[ns + b][k] = rate * inv_n - align;
        }
    }
    std::vector<WeakResidual> out;
    for (std::size_t b = 0; b < ns; ++b)
        out.push_back({"continuity/" + bank.scalar[b].name, std::abs(last[b] - first[b] - trapezoid(times, f[b])),
                       0.0});
    for (std::size_t b = 0; b < nv; ++b)
        out.push_back({"momentum/" + bank.vector[b].name,
                       std::abs(last[ns + b] - first[ns + b] - trapezoid(times, f[ns + b])), excluded_max});
    return out;
}

EnergyInequality energy_inequality_check(const Trajectory& traj, double h, double tolerance) {
    require_samples(traj);
    if (!(h > 0.0)) throw DomainError("cell size must be positive");
    EnergyInequality r;
    double e0 = 0.0, integral = 0.0, prev_t = 0.0, prev_d = 0.0;
    r.slack = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& s = traj.steps[k].state;
        const auto cv = cell_velocities(s, h);
        double dsum = 0.0;
        const double ex = for_kept_pairs(s, cv, traj.params, h, traj.params.p,
                                         [&](std::size_t i, std::size_t j, double w) {
                                             double du2 = 0.0;
                                             for (std::size_t a = 0; a < s.dim; ++a) {
                                                 const double b = cv.u[i * s.dim + a] - cv.u[j * s.dim + a];
                                                 du2 += b * b;
                                             }
                                             dsum += 2.0 * du2 * w;
                                         });
        r.excluded_mass = std::max(r.excluded_mass, ex);
        if (k == 0) {
            e0 = cv.energy;
        } else {
            integral += 0.5 * (s.t - prev_t) * (dsum + prev_d);
        }
        prev_t = s.t;
        prev_d = dsum;
        const double slack = e0 - cv.energy - integral;
        r.slack = std::min(r.slack, slack);
        r.slack_final = slack;
    }
    r.holds = r.slack >= -tolerance;
    return r;
}

// Studies ------------------------------------------------------------------------------------------

Trend assess_trend(std::vector<double> medians, std::size_t doublings) {
    Trend t;
    t.medians = std::move(medians);
    for (std::size_t k = 1; k < t.medians.size(); ++k)
        if (t.medians[k] > t.medians[k - 1]) ++t.inversions;
    t.allowed = std::max<std::size_t>(1, (doublings + 3) / 4);
    t.passed = t.inversions <= t.allowed;
    return t;
}

namespace {

void describe(std::ostream& o, const DensitySpec& r) {
    auto list = [&o](const std::vector<double>& v) {
        o << '[';
        for (double a : v) o << io::format_double(a) << ',';
        o << ']';
    };
    o << "rho(" << static_cast<int>(r.kind);
    list(r.lo);
    list(r.hi);
    list(r.center);
    o << io::format_double(r.radius) << ',' << io::format_double(r.sigma);
    list(r.mix_weights);
    for (const auto& c : r.components) describe(o, c);
    o << ')';
}

std::string fingerprint(const StudyConfig& cfg) {
    std::ostringstream o;
    const auto& u = cfg.spec.u0;
    o << "v" << io::kFormatVersion << ";d" << cfg.spec.dim << ';';
    describe(o, cfg.spec.rho0);
    o << ";u(" << static_cast<int>(u.kind);
    for (double a : u.value) o << io::format_double(a) << ',';
    o << '|';
    for (double a : u.matrix) o << io::format_double(a) << ',';
    o << io::format_double(u.rate) << ',' << io::format_double(u.speed) << ',' << io::format_double(u.split) << ','
      << u.converging << ");";
    const auto& p = cfg.params;
    o << io::format_double(p.alpha) << ',' << io::format_double(p.p) << ',' << io::format_double(p.reg_delta) << ';';
    const auto& c = cfg.integrator;
    o << io::format_double(c.rel_tol) << ',' << io::format_double(c.abs_tol) << ',' << io::format_double(c.dt_init)
      << ',' << io::format_double(c.dt_max) << ',' << io::format_double(c.dt_min) << ',' << io::format_double(c.kappa)
      << ',' << c.max_steps << ',' << io::format_double(c.nonsmooth_floor) << ';';
    for (double t : cfg.checkpoints) o << io::format_double(t) << ',';
    // FNV-1a is enough to keep differently configured runs apart.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : o.str()) h = (h ^ ch) * 0x100000001b3ULL;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<double> resolved_checkpoints(const StudyConfig& cfg) {
    if (!(cfg.horizon > 0.0)) throw DomainError("study horizon must be positive");
    std::vector<double> cp = cfg.checkpoints.empty() ? std::vector<double>{0.0, cfg.horizon} : cfg.checkpoints;
    for (double t : cp)
        if (!(t >= 0.0 && t <= cfg.horizon)) throw DomainError("checkpoints must lie in [0, horizon]");
    std::sort(cp.begin(), cp.end());
    cp.erase(std::unique(cp.begin(), cp.end()), cp.end());
    if (cp.back() != cfg.horizon) cp.push_back(cfg.horizon);
    return cp;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, count));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    auto work = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count) return;
            try {
                body(k);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = count;
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace

std::vector<ParticleState> study_run(const StudyConfig& cfg_in, std::uint64_t seed, std::size_t n) {
    StudyConfig cfg = cfg_in;
    cfg.checkpoints = resolved_checkpoints(cfg_in);
    std::string cache;
    if (!cfg.cache_dir.empty()) {
        cache = (std::filesystem::path(cfg.cache_dir) /
                 ("run_" + fingerprint(cfg) + "_s" + std::to_string(seed) + "_n" + std::to_string(n) + ".csv"))
                    .string();
        if (std::filesystem::exists(cache)) {
            std::ifstream in(cache);
            auto states = io::read_states_csv(in);
            if (states.size() == cfg.checkpoints.size() && states.front().n == n) return states;
        }
    }
    InitialDataSpec spec = cfg.spec;
    spec.seed = seed;
    ModelParams params = cfg.params;
    params.n_particles = n;
    params.dim = spec.dim;
    ParticleIntegrator integ(params, cfg.integrator, atomize(spec, n));
    std::vector<ParticleState> states;
    for (double t : cfg.checkpoints) {
        integ.advance_to(t);
        states.push_back(integ.state());
    }
    if (!cache.empty()) {
        std::ostringstream out;
        io::write_states_csv(out, states);
        io::write_file_atomic(cache, out.str());
    }
    return states;
}

ConvergenceReport convergence_study(const StudyConfig& cfg) {
    const auto& nl = cfg.n_list;
    if (nl.size() < 2) throw DomainError("a convergence study needs at least two particle counts");
    for (std::size_t k = 1; k < nl.size(); ++k)
        if (nl[k] != 2 * nl[k - 1]) throw DomainError("particle counts must double");
    if (cfg.seeds.empty()) throw DomainError("a convergence study needs at least one seed");
    if (!(cfg.h > 0.0)) throw DomainError("cell size must be positive");

    ConvergenceReport rep;
    rep.n_list = nl;
    rep.checkpoints = resolved_checkpoints(cfg);
    rep.seeds = cfg.seeds;
    const std::size_t S = cfg.seeds.size(), K = nl.size(), C = rep.checkpoints.size();

    std::vector<std::vector<std::vector<ParticleState>>> states(S, std::vector<std::vector<ParticleState>>(K));
    parallel_for(S * K, cfg.jobs, [&](std::size_t task) {
        const std::size_t s = task / K, k = task % K;
        states[s][k] = study_run(cfg, cfg.seeds[s], nl[k]);
    });

    auto cube = [](std::size_t a, std::size_t b, std::size_t c) {
        return std::vector<std::vector<std::vector<double>>>(a, std::vector<std::vector<double>>(b, std::vector<double>(c, 0.0)));
    };
    rep.monokineticity = cube(S, K, C);
    rep.energy = cube(S, K, C);
    rep.largest_cell_mass = cube(S, K, C);
    rep.dbl_rho = cube(S, K - 1, C);
    rep.dbl_mu = cube(S, K - 1, C);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c) {
                const auto& st = states[s][k][c];
                const auto lf = local_field(empirical(st), cfg.h);
                rep.monokineticity[s][k][c] = lf.monokineticity();
                rep.largest_cell_mass[s][k][c] = lf.largest_cell_mass();
                rep.energy[s][k][c] = kinetic_energy(st);
            }

    std::atomic<bool> approx{false};
    const std::size_t per_seed = (K - 1) * C;
    parallel_for(S * per_seed, cfg.jobs, [&](std::size_t task) {
        const std::size_t s = task / per_seed, k = (task % per_seed) / C, c = task % C;
        const auto mu_a = empirical(states[s][k][c]);
        const auto mu_b = empirical(states[s][k + 1][c]);
        const auto r = dbl_solve(marginal_x(mu_a), marginal_x(mu_b), cfg.dbl);
        rep.dbl_rho[s][k][c] = r.value;
        bool a = r.approximate;
        if (cfg.phase_space) {
            const auto q = dbl_solve(mu_a, mu_b, cfg.dbl);
            rep.dbl_mu[s][k][c] = q.value;
            a = a || q.approximate;
        }
        if (a) approx = true;
    });
    rep.any_approximate = approx;

    std::vector<double> rho_med, w_med;
    for (std::size_t k = 0; k + 1 < K; ++k) {
        std::vector<double> v;
        for (std::size_t s = 0; s < S; ++s) v.push_back(rep.dbl_rho[s][k][C - 1]);
        rho_med.push_back(median(v));
    }
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> v;
        for (std::size_t s = 0; s < S; ++s) v.push_back(rep.monokineticity[s][k][C - 1]);
        w_med.push_back(median(v));
    }
    rep.rho_trend = assess_trend(rho_med, K - 1);
    rep.w_trend = assess_trend(w_med, K - 1);
    for (const auto& per_seed_e : rep.energy)
        for (const auto& e : per_seed_e)
            for (std::size_t c = 1; c < C; ++c)
                if (e[c] > e[c - 1] * (1.0 + 1e-12) + 1e-300) rep.energy_monotone = false;
    return rep;
}

}  // namespace palign
