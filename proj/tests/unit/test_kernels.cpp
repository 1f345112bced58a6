#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "palign/errors.hpp"
#include "palign/kernels.hpp"
#include "palign/model.hpp"

using namespace palign;
using namespace palign::kernels;

namespace {

struct Soa {
    std::vector<std::vector<double>> x, v, a;
    std::vector<const double*> xp, vp;
    std::vector<double*> ap;
    SoaView view;

    Soa(const ParticleState& s) : x(s.dim), v(s.dim), a(s.dim) {
        for (std::size_t k = 0; k < s.dim; ++k) {
            for (std::size_t i = 0; i < s.n; ++i) {
                x[k].push_back(s.x[i * s.dim + k]);
                v[k].push_back(s.v[i * s.dim + k]);
            }
            a[k].assign(s.n, 0.0);
            xp.push_back(x[k].data());
            vp.push_back(v[k].data());
            ap.push_back(a[k].data());
        }
        view = {xp.data(), vp.data(), s.n, s.dim};
    }
};

// States with exact ties: repeated velocities and, optionally, a repeated position.
ParticleState tricky_state(std::size_t n, std::size_t d, std::uint64_t seed, bool collide) {
    auto s = palign::test::random_state(n, d, seed);
    std::mt19937_64 rng(seed ^ 0x9e37);
    for (std::size_t i = 0; i + 1 < n; i += 3)
        for (std::size_t k = 0; k < d; ++k) s.v[(i + 1) * d + k] = s.v[i * d + k];
    if (collide && n > 4)
        for (std::size_t k = 0; k < d; ++k) s.x[4 * d + k] = s.x[2 * d + k];
    return s;
}

double rel(double a, double b) {
    if (a == b) return 0.0;
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("half-power classification") {
        CHECK(HalfPower::of(0.0).exact);
        CHECK(HalfPower::of(-0.5).exact);
        CHECK(HalfPower::of(-0.5).quarters == -1);
        CHECK(HalfPower::of(2.5).quarters == 5);
        CHECK_FALSE(HalfPower::of(0.3).exact);
        CHECK_FALSE(HalfPower::of(40.0).exact);
    }

    TEST_CASE("backend selection") {
        CHECK(scalar_kernels().name == "scalar");
        CHECK(&kernels_for(Backend::Scalar) == &scalar_kernels());
        if (!avx2_available()) {
            CHECK_THROWS_AS(kernels_for(Backend::Avx2), DomainError);
        } else {
            const Backend before = active_backend();
            set_backend(Backend::Scalar);
            CHECK(&active() == &scalar_kernels());
            set_backend(Backend::Avx2);
            CHECK(active().name == "avx2");
            set_backend(before);
        }
    }

    TEST_CASE("AVX2 kernels match the scalar reference") {
        if (!avx2_available()) {
            MESSAGE("AVX2 not available; equivalence test skipped");
            return;
        }
        const auto& ref = scalar_kernels();
        const auto& simd = kernels_for(Backend::Avx2);
        const double exponents[][2] = {{1.0, 2.0}, {1.0, 3.0}, {2.0, 1.0}, {1.5, 2.5}, {3.0, 7.0},
                                       {1.3, 2.7}, {2.0, 1.2}, {1.0, 1.0}};
        std::uint64_t seed = 1;
        for (std::size_t n : {2u, 3u, 4u, 5u, 7u, 8u, 9u, 17u, 64u, 131u})
            for (std::size_t d : {1u, 2u, 3u, 5u, 8u, 9u})
                for (const auto& e : exponents)
                    for (double reg : {0.0, 0.05})
                        for (bool collide : {false, true}) {
                            const auto s = tricky_state(n, d, seed++, collide);
                            CAPTURE(n);
                            CAPTURE(d);
                            CAPTURE(e[0]);
                            CAPTURE(e[1]);
                            const auto pw = PairWeight::alignment(e[0], e[1], reg);
                            Soa a(s), b(s);
                            const auto ra = ref.accel(a.view, pw, a.ap.data());
                            const auto rb = simd.accel(b.view, pw, b.ap.data());
                            CHECK(ra.coincident == rb.coincident);
                            double scale = 0.0;
                            for (std::size_t k = 0; k < d; ++k)
                                for (double c : a.a[k]) scale = std::max(scale, std::abs(c));
                            for (std::size_t k = 0; k < d; ++k)
                                for (std::size_t i = 0; i < n; ++i)
                                    CHECK(std::abs(a.a[k][i] - b.a[k][i]) <= 1e-13 * scale);

                            const auto dw = PairWeight::dissipation(e[0], e[1], reg);
                            bool ca = false, cb = false;
                            const double sa = ref.pair_sum(a.view, dw, &ca);
                            const double sb = simd.pair_sum(b.view, dw, &cb);
                            CHECK(ca == cb);
                            CHECK(rel(sa, sb) <= 1e-13);

                            const auto xa = ref.extrema(a.view);
                            const auto xb = simd.extrema(b.view);
                            CHECK(xa.coincident == xb.coincident);
                            CHECK(rel(xa.min_dist_sq, xb.min_dist_sq) <= 1e-14);
                            CHECK(rel(xa.min_contact_sq, xb.min_contact_sq) <= 1e-14);
                        }
    }

    TEST_CASE("force through the active backend agrees with the scalar path") {
        if (!avx2_available()) return;
        const Backend before = active_backend();
        const auto s = palign::test::random_state(257, 3, 99);
        const auto m = palign::test::params(1.0, 3.0, 257, 3);
        set_backend(Backend::Scalar);
        const auto a = pairwise_force(s, m);
        set_backend(Backend::Avx2);
        const auto b = pairwise_force(s, m);
        set_backend(before);
        double scale = 0.0;
        for (double c : a) scale = std::max(scale, std::abs(c));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-13 * scale);
    }

    TEST_CASE("scalar kernel is bitwise deterministic") {
        const auto s = palign::test::random_state(100, 2, 3);
        const auto pw = PairWeight::alignment(1.5, 2.5, 0.0);
        Soa a(s), b(s);
        scalar_kernels().accel(a.view, pw, a.ap.data());
        scalar_kernels().accel(b.view, pw, b.ap.data());
        CHECK(a.a == b.a);
    }
}
