#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "palign/diagnostics.hpp"
#include "palign/errors.hpp"
#include "palign/integrator.hpp"

using namespace palign;
using palign::test::params;
using palign::test::random_state;

TEST_SUITE("diagnostics") {
    TEST_CASE("kinetic energy") {
        ParticleState s(2, 2);
        CHECK(kinetic_energy(s) == 0.0);
        s.v = {1, 0, -1, 0};
        CHECK(kinetic_energy(s) == 1.0);
        const auto r = random_state(20, 2, 1);
        auto rot = r;
        const double c = std::cos(0.7), sn = std::sin(0.7);
        for (std::size_t i = 0; i < rot.n; ++i) {
            const double a = r.v[2 * i], b = r.v[2 * i + 1];
            rot.v[2 * i] = c * a - sn * b;
            rot.v[2 * i + 1] = sn * a + c * b;
        }
        CHECK(kinetic_energy(rot) == doctest::Approx(kinetic_energy(r)).epsilon(1e-14));
    }

    TEST_CASE("dissipation rates") {
        ParticleState s(2, 1);
        s.x = {0, 1};
        s.v = {0, 1};
        CHECK(dissipation_Dp(s, params(1, 2, 2, 1)) == doctest::Approx(0.5).epsilon(1e-15));
        auto eq = random_state(10, 3, 2);
        for (std::size_t i = 0; i < eq.n; ++i)
            for (std::size_t k = 0; k < 3; ++k) eq.v[i * 3 + k] = 0.25 * static_cast<double>(k);
        CHECK(dissipation_Dp(eq, params(1.5, 2.5, 10, 3)) == 0.0);
        CHECK(dissipation_Dalpha(eq, params(1.5, 2.5, 10, 3)) == 0.0);

        const auto r = random_state(15, 2, 3);
        const auto m = params(2, 3, 15, 2);
        auto scaled = r;
        for (auto& v : scaled.v) v *= 1.7;
        CHECK(dissipation_Dp(scaled, m) == doctest::Approx(std::pow(1.7, 3) * dissipation_Dp(r, m)).epsilon(1e-12));
        CHECK(dissipation_Dp(r, m) > 0.0);
        CHECK(dissipation_Dalpha(r, params(2, 4, 15, 2)) == doctest::Approx(dissipation_Dp(r, params(2, 4, 15, 2))).epsilon(1e-15));

        ParticleState hit(2, 1);
        hit.x = {0.5, 0.5};
        hit.v = {0, 1};
        CHECK_THROWS_AS(dissipation_Dp(hit, params(1, 2, 2, 1)), CollisionError);
    }

    TEST_CASE("D^alpha is controlled by D_p on bounded speeds") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const auto r = random_state(12, 2, seed);
            const double alpha = 1.0 + 0.5 * static_cast<double>(seed % 4);
            const double p = alpha + static_cast<double>(seed % 3);
            const auto m = params(alpha, p, 12, 2);
            const double v = max_speed(r);
            CHECK(dissipation_Dalpha(r, m) <= std::pow(2 * v, alpha + 2 - p) * dissipation_Dp(r, m) * (1 + 1e-12));
        }
    }

    TEST_CASE("momentum and bounds") {
        ParticleState s(2, 2);
        s.x = {3, 4, -1, 0};
        s.v = {1, 0, -1, 0};
        CHECK(momentum(s) == std::vector<double>{0.0, 0.0});
        CHECK(max_speed(s) == 1.0);
        CHECK(max_position(s) == 5.0);
        CHECK(min_pair_dist(s) == doctest::Approx(std::sqrt(32.0)));
        const auto d = diagnose(s, params(1, 2, 2, 2));
        CHECK(d.energy_E == 1.0);
        CHECK(d.max_position == 5.0);
    }

    TEST_CASE("cluster norms") {
        ParticleState s(3, 1);
        s.x = {0, 1, 5};
        s.v = {0, 2, 1};
        const std::vector<std::size_t> c{0, 1};
        const auto r = cluster_norms(s, c);
        CHECK(r.x_norm == doctest::Approx(std::sqrt(2.0)));
        CHECK(r.v_norm == doctest::Approx(2 * std::sqrt(2.0)));
        REQUIRE(r.ratio);
        CHECK(*r.ratio == doctest::Approx(2.0));

        auto shifted = s;
        for (auto& v : shifted.v) v += 3.5;
        CHECK(*cluster_norms(shifted, c).ratio == doctest::Approx(2.0).epsilon(1e-14));

        ParticleState same(2, 1);
        same.x = {1, 1};
        same.v = {2, 2};
        const std::vector<std::size_t> both{0, 1};
        CHECK_FALSE(cluster_norms(same, both).ratio);
        same.v = {2, 3};
        CHECK(std::isinf(*cluster_norms(same, both).ratio));

        const std::vector<std::size_t> one{0};
        CHECK_THROWS_AS(cluster_norms(s, one), EmptyClusterError);
        const std::vector<std::size_t> bad{0, 7};
        CHECK_THROWS_AS(cluster_norms(s, bad), EmptyClusterError);
    }

    TEST_CASE("energy balance on an equal-velocity cloud is exact") {
        auto s = random_state(8, 2, 4);
        for (std::size_t i = 0; i < s.n; ++i) {
            s.v[2 * i] = 0.3;
            s.v[2 * i + 1] = -0.1;
        }
        const auto traj = run(s, params(2, 3, 8, 2), IntegratorConfig{}, 1.0);
        CHECK(energy_balance_residual(traj) == 0.0);
        CHECK(energy_balance_residual(traj, BalanceForm::Halved) == 0.0);
    }

    TEST_CASE("the energy balance supports the unit factor") {
        // Two particles, x = (0, 1), v = (0, 1), p = 2, alpha = 1: dE/dt = -0.5 = -D_p at t = 0.
        ParticleState s(2, 1);
        s.x = {0, 1};
        s.v = {0, 1};
        IntegratorConfig cfg;
        cfg.rel_tol = 1e-12;
        cfg.abs_tol = 1e-14;
        cfg.dt_max = 1e-3;
        const auto traj = run(s, params(1, 2, 2, 1), cfg, 0.5);
        const double unit = energy_balance_residual(traj, BalanceForm::Unit);
        const double half = energy_balance_residual(traj, BalanceForm::Halved);
        CHECK(unit <= 1e-6);
        CHECK(half >= 0.05);
    }

    TEST_CASE("energy balance needs two samples") {
        const auto s = random_state(4, 1, 5);
        const auto traj = run(s, params(1, 2, 4, 1), IntegratorConfig{}, 0.0);
        CHECK_THROWS_AS(energy_balance_residual(traj), DomainError);
    }
}
