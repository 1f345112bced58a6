#include <doctest.h>

#include <cmath>
#include <string>

#include "palign/config.hpp"
#include "palign/errors.hpp"

using namespace palign;
using namespace palign::config;

namespace {

std::string field_of(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("two-particle scenario with matched velocity") {
        const auto c = parse_scenario(R"({
            "scenario": "two_particle",
            "params": {"alpha": 2, "p": 5},
            "two_particle": {"r0": 1, "matched": true},
            "t_end": 3
        })");
        CHECK(c.kind == ScenarioKind::TwoParticle);
        CHECK_FALSE(c.rdot0.has_value());
        const auto s = initial_state(c);
        CHECK(s.x[1] - s.x[0] == 1.0);
        CHECK(s.v[1] - s.v[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
    }

    TEST_CASE("random cloud and two-cluster scenarios") {
        const auto c = parse_scenario(R"({
            "scenario": "random_cloud",
            "params": {"alpha": 2, "p": 3, "dim": 2, "n_particles": 8},
            "integrator": {"rel_tol": 1e-9, "dt_max": 1e-4, "collision_eps": 1e-9, "nonsmooth_floor": 1e-6},
            "random_cloud": {"half_width": 2, "speed": 0.5},
            "t_end": 1, "seed": 4, "stride": 3,
            "emit": {"plots": false}
        })", "/base");
        CHECK(c.integrator.dt_init == 1e-4);
        CHECK(*c.integrator.collision_eps == 1e-9);
        CHECK(c.integrator.nonsmooth_floor == 1e-6);
        CHECK(c.stride == 3);
        CHECK(c.out == "/base/palign_out");
        CHECK_FALSE(c.emit.plots);
        const auto s = initial_state(c);
        CHECK(s.n == 8);
        for (double v : s.v) CHECK(std::abs(v) <= 0.5);
        for (double x : s.x) CHECK(std::abs(x) <= 2.0);

        const auto t = parse_scenario(R"({
            "scenario": "two_cluster",
            "params": {"alpha": 1, "p": 3, "n_particles": 10},
            "initial": {"rho0": {"kind": "uniform_ball", "radius": 1},
                        "u0": {"kind": "two_cluster", "speed": 2}},
            "t_end": 1
        })");
        const auto st = initial_state(t);
        for (std::size_t i = 0; i < st.n; ++i) CHECK(st.v[i] == (st.x[i] < 0.0 ? -2.0 : 2.0));
    }

    TEST_CASE("errors name the offending field") {
        CHECK(field_of(R"({"scenario": "random_cloud", "params": {"p": 3, "n_particles": 4}, "t_end": 1})") ==
              "params.alpha");
        CHECK(field_of(R"({"scenario": "random_cloud", "params": {"alpha": 2, "p": 3, "n_particles": 4},
                           "t_end": 1, "colour": 3})") == "colour");
        CHECK(field_of(R"({"scenario": "random_cloud", "params": {"alpha": "two", "p": 3, "n_particles": 4},
                           "t_end": 1})") == "params.alpha");
        CHECK(field_of(R"({"scenario": "random_cloud", "params": {"alpha": 0.5, "p": 3, "n_particles": 4},
                           "t_end": 1})") == "params.alpha");
        CHECK(field_of(R"({"scenario": "random_cloud", "params": {"alpha": 2, "p": 3, "n_particles": 4},
                           "integrator": {"dt_init": 1, "dt_max": 0.1}, "t_end": 1})") == "integrator");
        CHECK(field_of(R"({"scenario": "spiral", "params": {"alpha": 2, "p": 3}, "t_end": 1})") == "scenario");
        CHECK(field_of(R"({"scenario": "two_particle", "params": {"alpha": 2, "p": 3},
                           "two_particle": {"r0": 1}, "t_end": 1})") == "two_particle.rdot0");
        CHECK(field_of(R"({"scenario": "two_cluster", "params": {"alpha": 1, "p": 3, "n_particles": 4},
                           "initial": {"rho0": {"kind": "cube"}, "u0": {"kind": "shear"}}, "t_end": 1})") ==
              "initial.rho0.kind");
        CHECK(field_of(R"({"scenario": "from_file", "params": {"alpha": 1, "p": 3, "n_particles": 4},
                           "state_file": "/nonexistent/state.csv", "t_end": 1})") == "state_file");
    }

    TEST_CASE("syntax errors report line and column") {
        try {
            parse_scenario("{\n  \"scenario\": \"two_particle\",\n  \"params\": {,}\n}");
            FAIL("expected a ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "<syntax>");
            CHECK(std::string(e.what()).find("line 3, column 14") != std::string::npos);
        }
    }

    TEST_CASE("study files") {
        const auto f = parse_study(R"({
            "spec": {"rho0": {"kind": "mixture", "components": [
                        {"kind": "uniform_box", "lo": [0], "hi": [1]},
                        {"kind": "truncated_gaussian", "sigma": 1, "radius": 2}], "weights": [1, 3]},
                     "u0": {"kind": "linear", "matrix": [[-1]], "offset": [0.5]}},
            "params": {"alpha": 1, "p": 3},
            "n_list": [8, 16, 32], "T": 2, "checkpoints": [1], "h": 0.05,
            "seeds": [1, 2], "phase_space": false, "support_cap": 500, "out": "res"
        })", "/work");
        CHECK(f.study.n_list == std::vector<std::size_t>{8, 16, 32});
        CHECK(f.study.spec.rho0.components.size() == 2);
        CHECK(f.study.spec.u0.matrix == std::vector<double>{-1.0});
        CHECK(f.study.dbl.support_cap == 500);
        CHECK(f.out == "/work/res");
        CHECK(f.study.cache_dir == "/work/res/runs");
        CHECK_THROWS_AS(parse_study(R"({"spec": {}, "params": {"alpha": 1, "p": 3}})"), ConfigError);
    }

    TEST_CASE("sweep grids") {
        const auto empty = parse_grid("{}");
        CHECK(empty.alpha.empty());
        const auto g = parse_grid(R"({"alpha": [2], "p_offset": [1, 3], "r0": [1], "tol": 1e-10})");
        CHECK(g.p_offset.size() == 2);
        CHECK(g.tol == 1e-10);
        CHECK_THROWS_AS(parse_grid(R"({"alpha": [0.5]})"), ConfigError);
        CHECK_THROWS_AS(parse_grid(R"({"r0": [0]})"), ConfigError);
    }
}
