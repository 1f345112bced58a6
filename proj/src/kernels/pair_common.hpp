#pragma once

#include <cmath>

#include "palign/kernels.hpp"

namespace palign::kernels::detail {

inline double ipow(double s, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= s;
    return r;
}

/// s^(e/2) for s >= 0.
inline double half_power(double s, const HalfPower& hp) {
    if (!hp.exact) return std::pow(s, hp.half_exponent);
    const int q = hp.quarters < 0 ? -hp.quarters : hp.quarters;
    double r = ipow(s, q / 4);
    if (q & 2) r *= std::sqrt(s);
    if (q & 1) r *= std::sqrt(std::sqrt(s));
    return hp.quarters < 0 ? 1.0 / r : r;
}

inline double pair_weight(double sx, double sv, const PairWeight& w) {
    return half_power(sv, w.velocity) / half_power(sx + w.delta_sq, w.distance);
}

}  // namespace palign::kernels::detail
