// Compiled with -mavx2 -mfma; only reached when the CPU reports both.
#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pair_common.hpp"
#include "palign/kernels.hpp"

namespace palign::kernels {
namespace {

constexpr std::size_t kLanes = 4;
constexpr std::size_t kMaxDim = 8;

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmin(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d m = _mm_min_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_min_sd(m, _mm_unpackhi_pd(m, m)));
}

inline __m256d half_power(__m256d s, const HalfPower& hp) {
    if (!hp.exact) {
        alignas(32) double lane[kLanes];
        _mm256_store_pd(lane, s);
        for (double& x : lane) x = std::pow(x, hp.half_exponent);
        return _mm256_load_pd(lane);
    }
    const int q = hp.quarters < 0 ? -hp.quarters : hp.quarters;
    __m256d r = _mm256_set1_pd(1.0);
    for (int i = 0; i < q / 4; ++i) r = _mm256_mul_pd(r, s);
    if (q & 3) {
        const __m256d root = _mm256_sqrt_pd(s);
        if (q & 2) r = _mm256_mul_pd(r, root);
        if (q & 1) r = _mm256_mul_pd(r, _mm256_sqrt_pd(root));
    }
    return hp.quarters < 0 ? _mm256_div_pd(_mm256_set1_pd(1.0), r) : r;
}

// Squared position and velocity differences of particle i against lanes j..j+3.
inline void pair_norms(const SoaView& s, std::size_t i, std::size_t j, __m256d& sx, __m256d& sv) {
    sx = _mm256_setzero_pd();
    sv = _mm256_setzero_pd();
    for (std::size_t k = 0; k < s.dim; ++k) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(s.x[k] + j), _mm256_set1_pd(s.x[k][i]));
        const __m256d dv = _mm256_sub_pd(_mm256_loadu_pd(s.v[k] + j), _mm256_set1_pd(s.v[k][i]));
        sx = _mm256_fmadd_pd(dx, dx, sx);
        sv = _mm256_fmadd_pd(dv, dv, sv);
    }
}

ForceResult accel_avx2(const SoaView& s, const PairWeight& pw, double* const* acc) {
    if (s.dim > kMaxDim) return scalar_kernels().accel(s, pw, acc);
    ForceResult res;
    const std::size_t n = s.n;
    const std::size_t dim = s.dim;
    for (std::size_t k = 0; k < dim; ++k) std::fill(acc[k], acc[k] + n, 0.0);

    const __m256d zero = _mm256_setzero_pd();
    const __m256d delta_sq = _mm256_set1_pd(pw.delta_sq);
    __m256d acc_i[kMaxDim];

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < dim; ++k) acc_i[k] = zero;
        std::size_t j = i + 1;
        for (; j + kLanes <= n; j += kLanes) {
            __m256d sx, sv;
            pair_norms(s, i, j, sx, sv);
            const __m256d r2 = _mm256_add_pd(sx, delta_sq);
            const __m256d hit = _mm256_cmp_pd(r2, zero, _CMP_EQ_OQ);
            if (_mm256_movemask_pd(hit)) res.coincident = true;
            const __m256d valid =
                _mm256_andnot_pd(hit, _mm256_cmp_pd(sv, zero, _CMP_GT_OQ));
            if (!_mm256_movemask_pd(valid)) continue;
            __m256d w = _mm256_div_pd(half_power(sv, pw.velocity), half_power(r2, pw.distance));
            w = _mm256_blendv_pd(zero, w, valid);
            for (std::size_t k = 0; k < dim; ++k) {
                const __m256d dv =
                    _mm256_sub_pd(_mm256_loadu_pd(s.v[k] + j), _mm256_set1_pd(s.v[k][i]));
                const __m256d f = _mm256_mul_pd(w, dv);
                acc_i[k] = _mm256_add_pd(acc_i[k], f);
                _mm256_storeu_pd(acc[k] + j, _mm256_sub_pd(_mm256_loadu_pd(acc[k] + j), f));
            }
        }
        for (std::size_t k = 0; k < dim; ++k) acc[k][i] += hsum(acc_i[k]);
        for (; j < n; ++j) {
            double sx = 0.0, sv = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double dx = s.x[k][j] - s.x[k][i];
                const double dv = s.v[k][j] - s.v[k][i];
                sx += dx * dx;
                sv += dv * dv;
            }
            if (sx + pw.delta_sq == 0.0) {
                res.coincident = true;
                continue;
            }
            if (sv == 0.0) continue;
            const double w = detail::pair_weight(sx, sv, pw);
            for (std::size_t k = 0; k < dim; ++k) {
                const double f = w * (s.v[k][j] - s.v[k][i]);
                acc[k][i] += f;
                acc[k][j] -= f;
            }
        }
    }
    const __m256d inv_n = _mm256_set1_pd(1.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < dim; ++k) {
        std::size_t i = 0;
        for (; i + kLanes <= n; i += kLanes)
            _mm256_storeu_pd(acc[k] + i, _mm256_mul_pd(_mm256_loadu_pd(acc[k] + i), inv_n));
        for (; i < n; ++i) acc[k][i] *= 1.0 / static_cast<double>(n);
    }
    return res;
}

double pair_sum_avx2(const SoaView& s, const PairWeight& pw, bool* coincident) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d delta_sq = _mm256_set1_pd(pw.delta_sq);
    double total = 0.0;
    bool hit_any = false;
    for (std::size_t i = 0; i < s.n; ++i) {
        __m256d row = zero;
        std::size_t j = i + 1;
        for (; j + kLanes <= s.n; j += kLanes) {
            __m256d sx, sv;
            pair_norms(s, i, j, sx, sv);
            const __m256d r2 = _mm256_add_pd(sx, delta_sq);
            const __m256d hit = _mm256_cmp_pd(r2, zero, _CMP_EQ_OQ);
            if (_mm256_movemask_pd(hit)) hit_any = true;
            const __m256d valid =
                _mm256_andnot_pd(hit, _mm256_cmp_pd(sv, zero, _CMP_GT_OQ));
            if (!_mm256_movemask_pd(valid)) continue;
            const __m256d w =
                _mm256_div_pd(half_power(sv, pw.velocity), half_power(r2, pw.distance));
            row = _mm256_add_pd(row, _mm256_blendv_pd(zero, w, valid));
        }
        double row_sum = hsum(row);
        for (; j < s.n; ++j) {
            double sx = 0.0, sv = 0.0;
            for (std::size_t k = 0; k < s.dim; ++k) {
                const double dx = s.x[k][j] - s.x[k][i];
                const double dv = s.v[k][j] - s.v[k][i];
                sx += dx * dx;
                sv += dv * dv;
            }
            if (sx + pw.delta_sq == 0.0) {
                hit_any = true;
                continue;
            }
            if (sv == 0.0) continue;
            row_sum += detail::pair_weight(sx, sv, pw);
        }
        total += row_sum;
    }
    if (coincident) *coincident = hit_any;
    return total;
}

PairExtrema extrema_avx2(const SoaView& s) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const __m256d zero = _mm256_setzero_pd();
    const __m256d vinf = _mm256_set1_pd(inf);
    __m256d min_sx = vinf;
    __m256d min_ct = vinf;
    PairExtrema e;
    e.min_dist_sq = inf;
    e.min_contact_sq = inf;
    for (std::size_t i = 0; i < s.n; ++i) {
        std::size_t j = i + 1;
        for (; j + kLanes <= s.n; j += kLanes) {
            __m256d sx, sv;
            pair_norms(s, i, j, sx, sv);
            if (_mm256_movemask_pd(_mm256_cmp_pd(sx, zero, _CMP_EQ_OQ))) e.coincident = true;
            min_sx = _mm256_min_pd(min_sx, sx);
            const __m256d moving = _mm256_cmp_pd(sv, zero, _CMP_GT_OQ);
            const __m256d ct = _mm256_blendv_pd(vinf, _mm256_div_pd(sx, sv), moving);
            min_ct = _mm256_min_pd(min_ct, ct);
        }
        for (; j < s.n; ++j) {
            double sx = 0.0, sv = 0.0;
            for (std::size_t k = 0; k < s.dim; ++k) {
                const double dx = s.x[k][j] - s.x[k][i];
                const double dv = s.v[k][j] - s.v[k][i];
                sx += dx * dx;
                sv += dv * dv;
            }
            if (sx == 0.0) e.coincident = true;
            e.min_dist_sq = std::min(e.min_dist_sq, sx);
            if (sv > 0.0) e.min_contact_sq = std::min(e.min_contact_sq, sx / sv);
        }
    }
    e.min_dist_sq = std::min(e.min_dist_sq, hmin(min_sx));
    e.min_contact_sq = std::min(e.min_contact_sq, hmin(min_ct));
    return e;
}

}  // namespace

const PairKernels& avx2_kernels() {
    static const PairKernels k{"avx2", &accel_avx2, &pair_sum_avx2, &extrema_avx2};
    return k;
}

}  // namespace palign::kernels
