#include "palign/model.hpp"

#include <cmath>
#include <string>

#include "palign/errors.hpp"
#include "palign/kernels.hpp"

namespace palign {

void ModelParams::validate() const {
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw DomainError("alpha must be >= 1");
    if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("p must be >= 1");
    if (!(reg_delta >= 0.0) || !std::isfinite(reg_delta)) throw DomainError("reg_delta must be >= 0");
    if (dim < 1) throw DomainError("dimension must be >= 1");
    if (n_particles < 2) throw DomainError("n_particles must be >= 2");
}

bool ParticleState::all_finite() const noexcept {
    for (double a : x)
        if (!std::isfinite(a)) return false;
    for (double a : v)
        if (!std::isfinite(a)) return false;
    return std::isfinite(t);
}

void check_state(const ParticleState& state, const ModelParams& params) {
    if (state.n != params.n_particles || state.dim != params.dim)
        throw DomainError("state shape " + std::to_string(state.n) + "x" + std::to_string(state.dim) +
                          " does not match params " + std::to_string(params.n_particles) + "x" +
                          std::to_string(params.dim));
    if (state.x.size() != state.n * state.dim || state.v.size() != state.n * state.dim)
        throw DomainError("state arrays have the wrong length");
    if (!state.all_finite()) throw NonFiniteError("state contains non-finite entries");
}

void ForceWorkspace::load(std::span<const double> x, std::span<const double> v, std::size_t n,
                          std::size_t dim) {
    if (n != n_ || dim != dim_) {
        n_ = n;
        dim_ = dim;
        xbuf_.assign(n * dim, 0.0);
        vbuf_.assign(n * dim, 0.0);
        abuf_.assign(n * dim, 0.0);
        xptr_.resize(dim);
        vptr_.resize(dim);
        aptr_.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            xptr_[k] = xbuf_.data() + k * n;
            vptr_[k] = vbuf_.data() + k * n;
            aptr_[k] = abuf_.data() + k * n;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < dim; ++k) {
            xbuf_[k * n + i] = x[i * dim + k];
            vbuf_[k * n + i] = v[i * dim + k];
        }
    }
}

void pairwise_force(std::span<const double> x, std::span<const double> v, const ModelParams& params,
                    ForceWorkspace& ws, std::span<double> out) {
    const std::size_t n = params.n_particles;
    const std::size_t dim = params.dim;
    ws.load(x, v, n, dim);
    const kernels::SoaView view{ws.xs(), ws.vs(), n, dim};
    const auto weight = kernels::PairWeight::alignment(params.alpha, params.p, params.reg_delta);
    const auto res = kernels::active().accel(view, weight, ws.acc());
    if (res.coincident) throw CollisionError("coincident particle positions with the exact singular kernel");
    double* const* acc = ws.acc();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < dim; ++k) {
            const double a = acc[k][i];
            if (!std::isfinite(a)) throw NonFiniteError("non-finite acceleration on particle " + std::to_string(i));
            out[i * dim + k] = a;
        }
    }
}

std::vector<double> pairwise_force(const ParticleState& state, const ModelParams& params) {
    check_state(state, params);
    ForceWorkspace ws;
    std::vector<double> out(state.n * state.dim);
    pairwise_force(state.x, state.v, params, ws, out);
    return out;
}

PhaseDerivative rhs(const ParticleState& state, const ModelParams& params) {
    PhaseDerivative d;
    d.dv = pairwise_force(state, params);
    d.dx = state.v;
    return d;
}

}  // namespace palign
