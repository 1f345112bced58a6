#include "palign/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <string>

#include "palign/errors.hpp"

namespace palign {

void AtomicMeasure::add(std::span<const double> z, double w) {
    if (z.size() != dim) throw DomainError("atom dimension mismatch");
    points.insert(points.end(), z.begin(), z.end());
    weights.push_back(w);
}

double AtomicMeasure::mass() const {
    double m = 0.0;
    for (double w : weights) m += w;
    return m;
}

void AtomicMeasure::validate() const {
    if (points.size() != weights.size() * dim) throw DomainError("measure points/weights shape mismatch");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("measure weights must be finite and >= 0");
    for (double z : points)
        if (!std::isfinite(z)) throw NonFiniteError("measure has a non-finite atom");
}

AtomicMeasure empirical(const ParticleState& state) {
    AtomicMeasure mu(2 * state.dim);
    mu.points.reserve(state.n * 2 * state.dim);
    mu.weights.assign(state.n, 1.0 / static_cast<double>(state.n));
    for (std::size_t i = 0; i < state.n; ++i) {
        auto x = state.pos(i);
        auto v = state.vel(i);
        mu.points.insert(mu.points.end(), x.begin(), x.end());
        mu.points.insert(mu.points.end(), v.begin(), v.end());
    }
    return mu;
}

namespace {

std::size_t half_dim(const AtomicMeasure& mu) {
    if (mu.dim == 0 || mu.dim % 2 != 0) throw DomainError("phase-space measure must have even dimension");
    return mu.dim / 2;
}

// Orders atoms by their raw bit patterns so that only bitwise-identical points compare equal.
struct BitwiseLess {
    std::size_t d;
    bool operator()(const std::vector<double>& a, const std::vector<double>& b) const {
        return std::memcmp(a.data(), b.data(), d * sizeof(double)) < 0;
    }
};

}  // namespace

AtomicMeasure marginal_x(const AtomicMeasure& mu) {
    const std::size_t d = half_dim(mu);
    AtomicMeasure rho(d);
    std::map<std::vector<double>, std::size_t, BitwiseLess> seen(BitwiseLess{d});
    for (std::size_t i = 0; i < mu.size(); ++i) {
        auto z = mu.point(i);
        std::vector<double> x(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
        auto [it, fresh] = seen.try_emplace(x, rho.size());
        if (fresh)
            rho.add(x, mu.weights[i]);
        else
            rho.weights[it->second] += mu.weights[i];
    }
    return rho;
}

bool Box::contains(std::span<const double> z) const {
    for (std::size_t a = 0; a < z.size(); ++a)
        if (z[a] < lo[a] || z[a] > hi[a]) return false;
    return true;
}

double Box::distance(std::span<const double> z) const {
    double s = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) {
        double e = 0.0;
        if (z[a] < lo[a])
            e = lo[a] - z[a];
        else if (z[a] > hi[a])
            e = z[a] - hi[a];
        s += e * e;
    }
    return std::sqrt(s);
}

double LocalField::monokineticity() const {
    double w = 0.0;
    for (const auto& c : cells) w += c.mass * c.spread;
    return w;
}

double LocalField::largest_cell_mass() const {
    double m = 0.0;
    for (const auto& c : cells) m = std::max(m, c.mass);
    return m;
}

LocalField local_field(const AtomicMeasure& mu, double h) {
    const std::size_t d = half_dim(mu);
    std::vector<double> hv(d, h);
    return local_field(mu, hv);
}

LocalField local_field(const AtomicMeasure& mu, std::span<const double> h) {
    const std::size_t d = half_dim(mu);
    if (h.size() != d) throw DomainError("cell size must have one entry per axis");
    for (double a : h)
        if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("cell size must be positive");

    LocalField f;
    f.dim = d;
    f.h.assign(h.begin(), h.end());
    f.atom_cell.resize(mu.size());
    std::map<std::vector<std::int64_t>, std::size_t> lookup;
    std::vector<std::int64_t> idx(d);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        auto z = mu.point(i);
        for (std::size_t a = 0; a < d; ++a) idx[a] = static_cast<std::int64_t>(std::floor(z[a] / h[a]));
        auto [it, fresh] = lookup.try_emplace(idx, f.cells.size());
        if (fresh) {
            LocalCell c;
            c.index = idx;
            c.mean_velocity.assign(d, 0.0);
            f.cells.push_back(std::move(c));
        }
        f.atom_cell[i] = it->second;
    }

    // Velocities are accumulated relative to the first atom of each cell, so a cell of identical
    // velocities gets that velocity back exactly and zero spread.
    std::vector<double> ref(f.cells.size() * d);
    std::vector<bool> has_ref(f.cells.size(), false);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const std::size_t k = f.atom_cell[i];
        auto& c = f.cells[k];
        const double w = mu.weights[i];
        auto z = mu.point(i);
        if (!has_ref[k]) {
            std::copy(z.begin() + static_cast<std::ptrdiff_t>(d), z.end(), ref.begin() + static_cast<std::ptrdiff_t>(k * d));
            has_ref[k] = true;
        }
        c.mass += w;
        for (std::size_t a = 0; a < d; ++a) c.mean_velocity[a] += w * (z[d + a] - ref[k * d + a]);
    }
    for (std::size_t k = 0; k < f.cells.size(); ++k) {
        auto& c = f.cells[k];
        if (c.mass > 0.0)
            for (std::size_t a = 0; a < d; ++a) c.mean_velocity[a] = ref[k * d + a] + c.mean_velocity[a] / c.mass;
        else
            std::fill(c.mean_velocity.begin(), c.mean_velocity.end(), 0.0);
        f.total_mass += c.mass;
    }
    // Second pass about the cell mean avoids cancellation in E|v|^2 - |u|^2.
    for (std::size_t i = 0; i < mu.size(); ++i) {
        auto& c = f.cells[f.atom_cell[i]];
        if (c.mass <= 0.0) continue;
        auto z = mu.point(i);
        double s = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            const double e = z[d + a] - c.mean_velocity[a];
            s += e * e;
        }
        c.spread += mu.weights[i] * s;
    }
    for (auto& c : f.cells)
        if (c.mass > 0.0) c.spread /= c.mass;

    f.bounds.lo.assign(d, 0.0);
    f.bounds.hi.assign(d, 0.0);
    if (!f.cells.empty()) {
        for (std::size_t a = 0; a < d; ++a) {
            std::int64_t lo = std::numeric_limits<std::int64_t>::max();
            std::int64_t hi = std::numeric_limits<std::int64_t>::min();
            for (const auto& c : f.cells) {
                lo = std::min(lo, c.index[a]);
                hi = std::max(hi, c.index[a]);
            }
            f.bounds.lo[a] = static_cast<double>(lo) * h[a];
            f.bounds.hi[a] = static_cast<double>(hi + 1) * h[a];
        }
    }
    return f;
}

double monokineticity_W(const AtomicMeasure& mu, double h) { return local_field(mu, h).monokineticity(); }

AtomicMeasure pushforward_T(const AtomicMeasure& mu, double t0, double t) {
    const std::size_t d = half_dim(mu);
    AtomicMeasure out = mu;
    const double s = t - t0;
    if (s == 0.0) return out;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double* z = out.points.data() + i * mu.dim;
        for (std::size_t a = 0; a < d; ++a) z[a] -= s * z[d + a];
    }
    return out;
}

AtomicMeasure sf_measure(const AtomicMeasure& mu, double t0, double t, const VelocityTest& phi) {
    const std::size_t d = half_dim(mu);
    AtomicMeasure out(d);
    out.points.reserve(mu.size() * d);
    out.weights.reserve(mu.size());
    const double s = t - t0;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        auto z = mu.point(i);
        auto v = z.subspan(d, d);
        for (std::size_t a = 0; a < d; ++a) x[a] = z[a] - s * v[a];
        out.add(x, mu.weights[i] * phi(v));
    }
    return out;
}

double mp_margin(const AtomicMeasure& rho_t0, const AtomicMeasure& rho_t, const Box& box, double speed_bound,
                 double elapsed) {
    if (rho_t0.dim != rho_t.dim || box.lo.size() != rho_t.dim || box.hi.size() != rho_t.dim)
        throw DomainError("mp_check dimension mismatch");
    if (!(speed_bound >= 0.0)) throw DomainError("speed bound must be >= 0");
    // A few ulps of slack so an atom that travelled exactly elapsed * M is not lost to rounding.
    const double reach = std::abs(elapsed) * speed_bound * (1.0 + 1e-13);
    double before = 0.0;
    for (std::size_t i = 0; i < rho_t0.size(); ++i)
        if (box.contains(rho_t0.point(i))) before += rho_t0.weights[i];
    double after = 0.0;
    for (std::size_t i = 0; i < rho_t.size(); ++i)
        if (box.distance(rho_t.point(i)) <= reach) after += rho_t.weights[i];
    return after - before;
}

bool mp_check(const AtomicMeasure& rho_t0, const AtomicMeasure& rho_t, const Box& box, double speed_bound,
              double elapsed) {
    return mp_margin(rho_t0, rho_t, box, speed_bound, elapsed) >= -1e-12;
}

}  // namespace palign
