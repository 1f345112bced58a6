#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "palign/model.hpp"

namespace palign {

/// Weighted point cloud sum_i w_i delta_{z_i} in R^k, points row-major n x k.
struct AtomicMeasure {
    std::size_t dim = 0;
    std::vector<double> points;
    std::vector<double> weights;

    AtomicMeasure() = default;
    explicit AtomicMeasure(std::size_t k) : dim(k) {}

    std::size_t size() const noexcept { return weights.size(); }
    std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
    void add(std::span<const double> z, double w);
    double mass() const;
    /// Throws DomainError on negative or non-finite weights, non-finite points or shape mismatch.
    void validate() const;
};

/// Atoms (x_i, v_i) in R^{2d} with weights 1/N.
AtomicMeasure empirical(const ParticleState& state);

/// Projection of a phase-space measure onto its first half of coordinates. Atoms whose projections
/// are bitwise identical are merged; first-occurrence order is kept.
AtomicMeasure marginal_x(const AtomicMeasure& mu);

struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    bool contains(std::span<const double> z) const;
    /// Euclidean distance from z to the closed box.
    double distance(std::span<const double> z) const;
};

struct LocalCell {
    std::vector<std::int64_t> index;
    double mass = 0.0;
    std::vector<double> mean_velocity;
    /// Mass-weighted mean of |v - u_c|^2 over the cell (population variance trace).
    double spread = 0.0;
};

/// Cell aggregation of a phase-space measure on the lattice h * Z^d anchored at the origin.
struct LocalField {
    std::size_t dim = 0;
    std::vector<double> h;
    std::vector<LocalCell> cells;  // occupied cells only, in first-occurrence order
    std::vector<std::size_t> atom_cell;
    Box bounds;  // union of occupied cells
    double total_mass = 0.0;

    /// Sum over cells of m_c * spread_c.
    double monokineticity() const;
    double largest_cell_mass() const;
};

LocalField local_field(const AtomicMeasure& mu, double h);
LocalField local_field(const AtomicMeasure& mu, std::span<const double> h);

/// W = sum_c m_c * spread_c at cell size h.
double monokineticity_W(const AtomicMeasure& mu, double h);

struct DblOptions {
    /// Union supports above this size are subsampled and the result flagged approximate.
    std::size_t support_cap = 2000;
    std::uint64_t seed = 0x5eed;
    /// Largest acceptable duality gap or constraint violation of the certificate.
    double tolerance = 1e-9;
};

struct DblResult {
    double value = 0.0;
    bool approximate = false;
    std::size_t support_size = 0;
    /// max(|primal - dual|, constraint violation) of the optimality certificate.
    double lp_residual = 0.0;
    /// Optimal test function on the (possibly subsampled) union support.
    AtomicMeasure support;  // weights hold mu - nu
    std::vector<double> test_function;
};

/// Bounded-Lipschitz distance sup { int phi d(mu - nu) : |phi| <= 1, Lip(phi) <= 1 } between
/// atomic measures, solved exactly as a linear program over the union support. The program is
/// solved through its network-flow dual and certified by a feasible primal test function.
/// Throws SolverToleranceError when the certificate residual exceeds options.tolerance.
DblResult dbl_solve(const AtomicMeasure& mu, const AtomicMeasure& nu, const DblOptions& options = {});
double dbl_distance(const AtomicMeasure& mu, const AtomicMeasure& nu, const DblOptions& options = {});

/// Atoms (x, v) moved to (x - (t - t0) v, v).
AtomicMeasure pushforward_T(const AtomicMeasure& mu, double t0, double t);

using VelocityTest = std::function<double(std::span<const double> v)>;

/// Position measure with atoms x_i - (t - t0) v_i and weights w_i * phi(v_i).
AtomicMeasure sf_measure(const AtomicMeasure& mu, double t0, double t, const VelocityTest& phi);

/// rho_t(closure(C) + (t - t0) * closed ball(M)) - rho_t0(C).
double mp_margin(const AtomicMeasure& rho_t0, const AtomicMeasure& rho_t, const Box& box, double speed_bound,
                 double elapsed);
/// True iff the local mass-preservation inequality holds within 1e-12.
bool mp_check(const AtomicMeasure& rho_t0, const AtomicMeasure& rho_t, const Box& box, double speed_bound,
              double elapsed);

}  // namespace palign
