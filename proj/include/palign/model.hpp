#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace palign {

/// Exponents and sizes of the p-Cucker-Smale system
///
///   dx_i/dt = v_i,
///   dv_i/dt = (1/N) sum_{j != i} |v_j - v_i|^{p-2} (v_j - v_i) / |x_i - x_j|^alpha.
struct ModelParams {
    double alpha = 1.0;
    double p = 2.0;
    std::size_t dim = 1;
    std::size_t n_particles = 2;
    /// Kernel mollification: r_ij = sqrt(|x_i - x_j|^2 + reg_delta^2). Zero keeps the exact kernel.
    double reg_delta = 0.0;

    /// Throws DomainError when an invariant is violated.
    void validate() const;

    /// True iff p <= alpha + 2, the regime where non-collisional data stays non-collisional.
    bool collision_safe() const noexcept { return p <= alpha + 2.0; }
};

/// Positions and velocities, row-major N x d.
struct ParticleState {
    double t = 0.0;
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> x;
    std::vector<double> v;

    ParticleState() = default;
    ParticleState(std::size_t n_particles, std::size_t d, double time = 0.0)
        : t(time), n(n_particles), dim(d), x(n_particles * d, 0.0), v(n_particles * d, 0.0) {}

    std::span<double> pos(std::size_t i) { return {x.data() + i * dim, dim}; }
    std::span<const double> pos(std::size_t i) const { return {x.data() + i * dim, dim}; }
    std::span<double> vel(std::size_t i) { return {v.data() + i * dim, dim}; }
    std::span<const double> vel(std::size_t i) const { return {v.data() + i * dim, dim}; }

    bool all_finite() const noexcept;
    bool operator==(const ParticleState&) const = default;
};

struct PhaseDerivative {
    std::vector<double> dx;
    std::vector<double> dv;
};

/// Structure-of-arrays scratch space reused across force evaluations.
class ForceWorkspace {
public:
    void load(std::span<const double> x, std::span<const double> v, std::size_t n, std::size_t dim);

    std::size_t n() const noexcept { return n_; }
    std::size_t dim() const noexcept { return dim_; }
    const double* const* xs() const noexcept { return xptr_.data(); }
    const double* const* vs() const noexcept { return vptr_.data(); }
    double* const* acc() noexcept { return aptr_.data(); }

private:
    std::size_t n_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> xbuf_, vbuf_, abuf_;
    std::vector<const double*> xptr_, vptr_;
    std::vector<double*> aptr_;
};

/// Accelerations a_i, row-major N x d. Throws CollisionError on coincident positions when
/// reg_delta == 0 and NonFiniteError when the result overflows.
std::vector<double> pairwise_force(const ParticleState& state, const ModelParams& params);

/// Same as above on raw row-major arrays, writing into `out` (size N*d).
void pairwise_force(std::span<const double> x, std::span<const double> v, const ModelParams& params,
                    ForceWorkspace& ws, std::span<double> out);

PhaseDerivative rhs(const ParticleState& state, const ModelParams& params);

/// Checks that the state's shape matches params and all entries are finite.
void check_state(const ParticleState& state, const ModelParams& params);

}  // namespace palign
