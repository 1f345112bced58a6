#pragma once

// Pairwise O(N^2) kernels over structure-of-arrays particle data. Every kernel has a scalar
// reference implementation and, where the CPU allows, an AVX2 variant selected at runtime.

#include <cstddef>
#include <string_view>

namespace palign::kernels {

/// Exponent of a squared distance: computes s^(e/2). Exponents that are multiples of 1/2 are
/// evaluated with multiplications and square roots; anything else goes through std::pow.
struct HalfPower {
    double half_exponent = 0.0;  // e/2
    int quarters = 0;            // 2e when exact
    bool exact = false;

    static HalfPower of(double exponent);
};

/// Weight |dv|^{p-2} / r^alpha with r^2 = |dx|^2 + delta^2.
struct PairWeight {
    HalfPower velocity;  // exponent p - 2 on |dv|
    HalfPower distance;  // exponent alpha on r (applied as a divisor)
    double delta_sq = 0.0;

    static PairWeight alignment(double alpha, double p, double reg_delta);
    /// |dv|^q / r^alpha, the dissipation integrand.
    static PairWeight dissipation(double alpha, double q, double reg_delta);
};

struct SoaView {
    const double* const* x = nullptr;
    const double* const* v = nullptr;
    std::size_t n = 0;
    std::size_t dim = 0;
};

struct PairExtrema {
    double min_dist_sq = 0.0;
    /// min over pairs with distinct velocities of |dx|^2 / |dv|^2 (time to contact squared).
    double min_contact_sq = 0.0;
    bool coincident = false;
};

struct ForceResult {
    bool coincident = false;
};

/// acc[k][i] = (1/N) sum_{j != i} w_ij (v_j - v_i)_k. Pairs are visited once (i < j) and
/// accumulated antisymmetrically.
using AccelFn = ForceResult (*)(const SoaView&, const PairWeight&, double* const* acc);
/// sum over unordered pairs of w_ij; `coincident` is set through the out parameter.
using PairSumFn = double (*)(const SoaView&, const PairWeight&, bool* coincident);
using ExtremaFn = PairExtrema (*)(const SoaView&);

struct PairKernels {
    std::string_view name;
    AccelFn accel;
    PairSumFn pair_sum;
    ExtremaFn extrema;
};

enum class Backend { Scalar, Avx2 };

const PairKernels& scalar_kernels();
bool avx2_available();
/// Throws DomainError if the backend is not available on this CPU/build.
const PairKernels& kernels_for(Backend backend);

/// Backend used by the library. Defaults to the widest available; PALIGN_SIMD=scalar or
/// PALIGN_DETERMINISTIC=1 pin the scalar reference so results do not depend on the CPU.
const PairKernels& active();
Backend active_backend();
void set_backend(Backend backend);

}  // namespace palign::kernels
