#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "palign/errors.hpp"
#include "palign/measures.hpp"

using namespace palign;

namespace {

AtomicMeasure phase(std::initializer_list<std::array<double, 3>> atoms) {
    AtomicMeasure m(2);
    for (const auto& a : atoms) m.add(std::vector<double>{a[0], a[1]}, a[2]);
    return m;
}

}  // namespace

TEST_SUITE("measures") {
    TEST_CASE("empirical measure") {
        auto s = palign::test::random_state(7, 2, 1);
        const auto mu = empirical(s);
        CHECK(mu.dim == 4);
        CHECK(mu.size() == 7);
        CHECK(mu.mass() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(mu.point(3)[0] == s.x[6]);
        CHECK(mu.point(3)[3] == s.v[7]);

        ParticleState one(1, 1);
        one.x = {2.0};
        one.v = {-1.0};
        const auto single = empirical(one);
        CHECK(single.size() == 1);
        CHECK(single.weights[0] == 1.0);

        ParticleState dup(2, 1);
        dup.x = {0.5, 0.5};
        dup.v = {1.0, 1.0};
        const auto twice = empirical(dup);
        CHECK(twice.size() == 2);
        CHECK(twice.weights[0] == 0.5);
    }

    TEST_CASE("marginal merges bitwise-equal projections only") {
        const auto mu = phase({{0.0, 1.0, 0.5}, {0.0, 2.0, 0.5}});
        const auto rho = marginal_x(mu);
        REQUIRE(rho.size() == 1);
        CHECK(rho.point(0)[0] == 0.0);
        CHECK(rho.weights[0] == 1.0);

        const auto nu = phase({{0.25, 1.0, 0.25}, {std::nextafter(0.25, 1.0), 1.0, 0.25}, {0.25, 3.0, 0.5}});
        const auto r2 = marginal_x(nu);
        REQUIRE(r2.size() == 2);
        CHECK(r2.weights[0] == 0.75);
        CHECK(r2.weights[1] == 0.25);
        CHECK(r2.mass() == nu.mass());
        CHECK_THROWS_AS(marginal_x(AtomicMeasure(3)), DomainError);
    }

    TEST_CASE("local field statistics") {
        const auto mono = empirical(palign::test::random_state(50, 2, 3));
        auto flat = mono;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            flat.points[i * 4 + 2] = 0.7;
            flat.points[i * 4 + 3] = -0.2;
        }
        const auto f = local_field(flat, 0.3);
        for (const auto& c : f.cells) {
            CHECK(c.mean_velocity[0] == doctest::Approx(0.7).epsilon(1e-14));
            CHECK(c.mean_velocity[1] == doctest::Approx(-0.2).epsilon(1e-14));
            CHECK(c.spread <= 1e-28);
        }
        CHECK(f.total_mass == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(monokineticity_W(flat, 0.3) <= 1e-28);

        const auto pm = phase({{0.1, 1.0, 0.5}, {0.2, -1.0, 0.5}});
        const auto g = local_field(pm, 1.0);
        REQUIRE(g.cells.size() == 1);
        CHECK(g.cells[0].mean_velocity[0] == 0.0);
        CHECK(g.cells[0].spread == 1.0);
        CHECK(monokineticity_W(pm, 1.0) == 1.0);
        CHECK(monokineticity_W(pm, 0.15) == 0.0);
        CHECK_THROWS_AS(local_field(pm, 0.0), DomainError);
    }

    TEST_CASE("W is invariant under lattice translations") {
        const auto mu = empirical(palign::test::random_state(80, 2, 4));
        const double h = 0.25;
        auto shifted = mu;
        for (std::size_t i = 0; i < shifted.size(); ++i) {
            shifted.points[i * 4 + 0] += 3 * h;
            shifted.points[i * 4 + 1] -= 5 * h;
        }
        CHECK(monokineticity_W(shifted, h) == doctest::Approx(monokineticity_W(mu, h)).epsilon(1e-12));
    }

    TEST_CASE("local field bounds cover the cells") {
        const auto pm = phase({{-0.05, 1.0, 0.5}, {0.42, -1.0, 0.5}});
        const auto g = local_field(pm, 0.1);
        CHECK(g.bounds.lo[0] == doctest::Approx(-0.1));
        CHECK(g.bounds.hi[0] == doctest::Approx(0.5));
        CHECK(g.largest_cell_mass() == 0.5);
    }

    TEST_CASE("pushforward and its inverse") {
        const auto mu = phase({{1.0, 2.0, 1.0}});
        const auto out = pushforward_T(mu, 0.25, 0.75);
        CHECK(out.point(0)[0] == 0.0);
        CHECK(out.point(0)[1] == 2.0);
        CHECK(pushforward_T(mu, 1.0, 1.0).points == mu.points);

        const auto cloud = empirical(palign::test::random_state(30, 3, 8));
        const auto back = pushforward_T(pushforward_T(cloud, 0.0, 0.6), 0.6, 0.0);
        for (std::size_t i = 0; i < cloud.points.size(); ++i)
            CHECK(back.points[i] == doctest::Approx(cloud.points[i]).epsilon(1e-14));
        CHECK(back.weights == cloud.weights);
    }

    TEST_CASE("steadily-flowing measure") {
        const auto cloud = empirical(palign::test::random_state(25, 2, 9));
        const auto one = sf_measure(cloud, 0.0, 0.4, [](auto) { return 1.0; });
        CHECK(one.mass() == doctest::Approx(1.0).epsilon(1e-14));
        const auto ref = pushforward_T(cloud, 0.0, 0.4);
        for (std::size_t i = 0; i < one.size(); ++i) {
            CHECK(one.point(i)[0] == ref.point(i)[0]);
            CHECK(one.point(i)[1] == ref.point(i)[1]);
        }
        CHECK(sf_measure(cloud, 0.0, 0.4, [](auto) { return 0.0; }).mass() == 0.0);

        auto mono = cloud;
        for (std::size_t i = 0; i < mono.size(); ++i) {
            mono.points[i * 4 + 2] = 0.6;
            mono.points[i * 4 + 3] = 0.8;
        }
        const auto sq = sf_measure(mono, 0.0, 1.0, [](auto v) { return v[0] * v[0] + v[1] * v[1]; });
        CHECK(sq.mass() == doctest::Approx(1.0).epsilon(1e-14));
    }

    TEST_CASE("mass-preservation check") {
        AtomicMeasure a(1), b(1);
        a.add(std::vector<double>{0.0}, 1.0);
        b.add(std::vector<double>{0.3}, 1.0);
        const Box c{{-0.1}, {0.1}};
        CHECK(mp_check(a, a, c, 1.0, 0.0));
        CHECK(mp_check(a, b, c, 1.0, 0.2));
        CHECK(mp_check(a, b, c, 1.0, 0.3));
        CHECK_FALSE(mp_check(a, b, c, 1.0, 0.15));
        CHECK(mp_check(a, b, Box{{5.0}, {6.0}}, 1.0, 0.0));
        CHECK(mp_margin(a, b, c, 1.0, 0.15) == -1.0);
    }
}
