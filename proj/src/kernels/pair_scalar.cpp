#include <limits>

#include "pair_common.hpp"
#include "palign/kernels.hpp"

namespace palign::kernels {
namespace {

ForceResult accel_scalar(const SoaView& s, const PairWeight& pw, double* const* acc) {
    ForceResult res;
    const std::size_t n = s.n;
    const std::size_t dim = s.dim;
    for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t i = 0; i < n; ++i) acc[k][i] = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
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
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t i = 0; i < n; ++i) acc[k][i] *= inv_n;
    return res;
}

double pair_sum_scalar(const SoaView& s, const PairWeight& pw, bool* coincident) {
    double total = 0.0;
    bool hit = false;
    for (std::size_t i = 0; i < s.n; ++i) {
        double row = 0.0;
        for (std::size_t j = i + 1; j < s.n; ++j) {
            double sx = 0.0, sv = 0.0;
            for (std::size_t k = 0; k < s.dim; ++k) {
                const double dx = s.x[k][j] - s.x[k][i];
                const double dv = s.v[k][j] - s.v[k][i];
                sx += dx * dx;
                sv += dv * dv;
            }
            if (sx + pw.delta_sq == 0.0) {
                hit = true;
                continue;
            }
            if (sv == 0.0) continue;
            row += detail::pair_weight(sx, sv, pw);
        }
        total += row;
    }
    if (coincident) *coincident = hit;
    return total;
}

PairExtrema extrema_scalar(const SoaView& s) {
    PairExtrema e;
    e.min_dist_sq = std::numeric_limits<double>::infinity();
    e.min_contact_sq = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t j = i + 1; j < s.n; ++j) {
            double sx = 0.0, sv = 0.0;
            for (std::size_t k = 0; k < s.dim; ++k) {
                const double dx = s.x[k][j] - s.x[k][i];
                const double dv = s.v[k][j] - s.v[k][i];
                sx += dx * dx;
                sv += dv * dv;
            }
            if (sx == 0.0) e.coincident = true;
            if (sx < e.min_dist_sq) e.min_dist_sq = sx;
            if (sv > 0.0 && sx / sv < e.min_contact_sq) e.min_contact_sq = sx / sv;
        }
    }
    return e;
}

}  // namespace

const PairKernels& scalar_kernels() {
    static const PairKernels k{"scalar", &accel_scalar, &pair_sum_scalar, &extrema_scalar};
    return k;
}

}  // namespace palign::kernels
