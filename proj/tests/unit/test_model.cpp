#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "palign/errors.hpp"
#include "palign/model.hpp"
#include "palign/oracle.hpp"

using namespace palign;
using palign::test::params;
using palign::test::random_state;

TEST_SUITE("model") {
    TEST_CASE("params validation and the collision-safe flag") {
        CHECK_NOTHROW(params(1, 1, 2, 1).validate());
        CHECK_THROWS_AS(params(0.5, 2, 2, 1).validate(), DomainError);
        CHECK_THROWS_AS(params(1, 0.9, 2, 1).validate(), DomainError);
        CHECK_THROWS_AS(params(1, 2, 1, 1).validate(), DomainError);
        CHECK_THROWS_AS(params(1, 2, 2, 0).validate(), DomainError);
        CHECK_THROWS_AS(params(1, 2, 2, 1, -1.0).validate(), DomainError);
        CHECK(params(1, 3, 2, 1).collision_safe());
        CHECK_FALSE(params(1, 3.01, 2, 1).collision_safe());
        CHECK(params(2, 4, 2, 1).collision_safe());
    }

    TEST_CASE("two-particle force example") {
        ParticleState s(2, 1);
        s.x = {0.0, 1.0};
        s.v = {0.0, 1.0};
        const auto a = pairwise_force(s, params(1, 2, 2, 1));
        CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(a[1] == doctest::Approx(-0.5).epsilon(1e-15));
        const auto d = rhs(s, params(1, 2, 2, 1));
        CHECK(d.dx == std::vector<double>{0.0, 1.0});
        CHECK(d.dv == a);
    }

    TEST_CASE("equal velocities give zero force for every p") {
        for (double p : {1.0, 1.5, 2.0, 3.0, 7.0}) {
            ParticleState s(2, 2);
            s.x = {0.0, 0.0, 0.3, -0.4};
            s.v = {1.25, -2.0, 1.25, -2.0};
            const auto d = rhs(s, params(1.5, p, 2, 2));
            for (double a : d.dv) CHECK(a == 0.0);
            CHECK(d.dx == s.v);
        }
    }

    TEST_CASE("coincident positions raise CollisionError unless regularized") {
        ParticleState s(3, 2);
        s.x = {0, 0, 1, 1, 0, 0};
        s.v = {1, 0, 0, 1, -1, 0};
        CHECK_THROWS_AS(pairwise_force(s, params(1, 2, 3, 2)), CollisionError);
        CHECK_NOTHROW(pairwise_force(s, params(1, 2, 3, 2, 0.1)));
    }

    TEST_CASE("non-finite output raises NonFiniteError") {
        ParticleState s(2, 1);
        s.x = {0.0, 1e-150};
        s.v = {0.0, 1.0};
        CHECK_THROWS_AS(pairwise_force(s, params(3, 2, 2, 1)), NonFiniteError);
        s.x = {0.0, 1.0};
        s.v = {0.0, NAN};
        CHECK_THROWS_AS(check_state(s, params(1, 2, 2, 1)), NonFiniteError);
    }

    TEST_CASE("huge regularization makes the force vanish") {
        const auto s = random_state(20, 3, 11);
        const auto m = params(2, 3, 20, 3, 1e6);
        double vmax = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) {
            double q = 0;
            for (double c : s.vel(i)) q += c * c;
            vmax = std::max(vmax, std::sqrt(q));
        }
        const double bound = std::pow(2 * vmax, m.p - 1) / std::pow(1e6, m.alpha);
        const auto a = pairwise_force(s, m);
        for (std::size_t i = 0; i < s.n; ++i) {
            double q = 0;
            for (std::size_t k = 0; k < 3; ++k) q += a[i * 3 + k] * a[i * 3 + k];
            CHECK(std::sqrt(q) <= bound);
        }
    }

    TEST_CASE("skew symmetry: accelerations sum to zero") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const std::size_t n = 3 + seed * 7, d = 1 + seed % 3;
            const auto s = random_state(n, d, seed);
            const double p = 1.0 + 0.37 * static_cast<double>(seed % 9);
            const auto a = pairwise_force(s, params(1.0 + 0.25 * (seed % 5), p, n, d));
            double amax = 0.0;
            for (double c : a) amax = std::max(amax, std::abs(c));
            for (std::size_t k = 0; k < d; ++k) {
                double sum = 0.0;
                for (std::size_t i = 0; i < n; ++i) sum += a[i * d + k];
                CHECK(std::abs(sum) <= 1e-12 * static_cast<double>(n) * amax);
            }
        }
    }

    TEST_CASE("scaling distances by lambda scales forces by lambda^-alpha") {
        const auto s = random_state(15, 2, 5);
        for (double alpha : {1.0, 1.5, 2.0, 3.3}) {
            const auto m = params(alpha, 2.5, 15, 2);
            auto scaled = s;
            const double lambda = 2.75;
            for (auto& x : scaled.x) x *= lambda;
            const auto a = pairwise_force(s, m);
            const auto b = pairwise_force(scaled, m);
            for (std::size_t i = 0; i < a.size(); ++i)
                CHECK(b[i] == doctest::Approx(a[i] * std::pow(lambda, -alpha)).epsilon(1e-12));
        }
    }

    TEST_CASE("summand vanishes continuously as velocities merge") {
        for (double p : {1.2, 2.0, 4.0}) {
            double prev = INFINITY;
            for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
                ParticleState s(2, 1);
                s.x = {0.0, 1.0};
                s.v = {0.0, eps};
                const double a = std::abs(pairwise_force(s, params(1, p, 2, 1))[0]);
                CHECK(a < prev);
                prev = a;
            }
            CHECK(prev <= std::pow(1e-8, p - 1.0));
        }
    }

    TEST_CASE("agrees with the textbook double loop") {
        for (std::uint64_t seed = 100; seed < 130; ++seed) {
            const std::size_t n = 2 + seed % 40, d = 1 + seed % 4;
            const auto s = random_state(n, d, seed);
            const auto m = params(1.0 + 0.5 * (seed % 4), 1.0 + 0.5 * (seed % 7), n, d, (seed % 3 == 0) ? 0.05 : 0.0);
            const auto a = pairwise_force(s, m);
            const auto b = oracle::force_bruteforce(s, m);
            double scale = 0.0;
            for (double c : b) scale = std::max(scale, std::abs(c));
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * scale);
        }
    }
}
