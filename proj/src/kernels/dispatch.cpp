#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string_view>

#include "palign/errors.hpp"
#include "palign/kernels.hpp"

namespace palign::kernels {

#ifdef PALIGN_HAVE_AVX2
const PairKernels& avx2_kernels();
#endif

HalfPower HalfPower::of(double exponent) {
    HalfPower hp;
    hp.half_exponent = 0.5 * exponent;
    const double quarters = 2.0 * exponent;
    if (quarters == std::nearbyint(quarters) && std::abs(quarters) <= 64.0) {
        hp.exact = true;
        hp.quarters = static_cast<int>(quarters);
    }
    return hp;
}

PairWeight PairWeight::alignment(double alpha, double p, double reg_delta) {
    return {HalfPower::of(p - 2.0), HalfPower::of(alpha), reg_delta * reg_delta};
}

PairWeight PairWeight::dissipation(double alpha, double q, double reg_delta) {
    return {HalfPower::of(q), HalfPower::of(alpha), reg_delta * reg_delta};
}

bool avx2_available() {
#if defined(PALIGN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const PairKernels& kernels_for(Backend backend) {
    if (backend == Backend::Scalar) return scalar_kernels();
#ifdef PALIGN_HAVE_AVX2
    if (avx2_available()) return avx2_kernels();
#endif
    throw DomainError("AVX2 kernels are not available on this machine");
}

namespace {

bool env_is(const char* name, std::string_view value) {
    const char* v = std::getenv(name);
    return v != nullptr && std::string_view(v) == value;
}

Backend default_backend() {
    if (env_is("PALIGN_DETERMINISTIC", "1") || env_is("PALIGN_SIMD", "scalar")) return Backend::Scalar;
    return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<int>& backend_slot() {
    static std::atomic<int> slot{static_cast<int>(default_backend())};
    return slot;
}

}  // namespace

Backend active_backend() { return static_cast<Backend>(backend_slot().load(std::memory_order_relaxed)); }

const PairKernels& active() { return kernels_for(active_backend()); }

void set_backend(Backend backend) {
    (void)kernels_for(backend);
    backend_slot().store(static_cast<int>(backend), std::memory_order_relaxed);
}

}  // namespace palign::kernels
