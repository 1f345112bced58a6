#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "palign/errors.hpp"
#include "palign/io.hpp"

using namespace palign;

namespace {

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_SUITE("io") {
    TEST_CASE("format_double round-trips") {
        for (double x : {0.1, 1.0 / 3.0, -2.5e-310, 1.7976931348623157e308, 6.02214076e23, -0.0, 1e-15}) {
            const auto s = io::format_double(x);
            CHECK(bitwise_equal(std::strtod(s.c_str(), nullptr), x));
        }
    }

    TEST_CASE("state CSV round-trip is bitwise") {
        std::vector<ParticleState> states;
        for (int k = 0; k < 3; ++k) {
            auto s = palign::test::random_state(5, 3, 10 + k);
            s.t = 0.1 * k + 1.0 / 7.0;
            states.push_back(s);
        }
        std::stringstream buf;
        io::write_states_csv(buf, states);
        const auto back = io::read_states_csv(buf);
        REQUIRE(back.size() == states.size());
        for (std::size_t k = 0; k < states.size(); ++k) CHECK(back[k] == states[k]);
    }

    TEST_CASE("state CSV with repeated times splits on particle index") {
        auto a = palign::test::random_state(2, 1, 1);
        auto b = palign::test::random_state(2, 1, 2);
        std::stringstream buf;
        io::write_states_csv(buf, {a, b});
        const auto back = io::read_states_csv(buf);
        REQUIRE(back.size() == 2);
        CHECK(back[1] == b);
    }

    TEST_CASE("malformed state files are rejected") {
        std::istringstream empty("");
        CHECK_THROWS_AS(io::read_states_csv(empty), IoError);
        std::istringstream header("t,x_0\n");
        CHECK_THROWS_AS(io::read_states_csv(header), IoError);
        std::istringstream fields("t,i,x_0,v_0\n0,0,1\n");
        CHECK_THROWS_AS(io::read_states_csv(fields), IoError);
        std::istringstream number("t,i,x_0,v_0\n0,0,abc,1\n");
        CHECK_THROWS_AS(io::read_states_csv(number), IoError);
        std::istringstream order("t,i,x_0,v_0\n0,1,0,1\n");
        CHECK_THROWS_AS(io::read_states_csv(order), IoError);
    }

    TEST_CASE("trajectory save and load reproduce states, events and diagnostics") {
        const auto dir = palign::test::scratch_dir("io_traj");
        auto p = palign::test::params(2.0, 3.0, 6, 2);
        IntegratorConfig cfg;
        cfg.dt_max = 0.05;
        const auto traj = run(palign::test::random_state(6, 2, 4), p, cfg, 0.5);
        const auto files = io::save_trajectory(traj, dir.string());
        CHECK(std::filesystem::exists(files.diagnostics));
        const auto back = io::load_trajectory(files.states, files.sidecar);
        REQUIRE(back.steps.size() == traj.steps.size());
        for (std::size_t k = 0; k < traj.steps.size(); ++k) {
            CHECK(back.steps[k].state == traj.steps[k].state);
            CHECK(bitwise_equal(back.steps[k].accepted_dt, traj.steps[k].accepted_dt));
            CHECK(bitwise_equal(back.steps[k].diag.energy_E, traj.steps[k].diag.energy_E));
            CHECK(back.steps[k].diag.mean_velocity == traj.steps[k].diag.mean_velocity);
        }
        CHECK(back.params.alpha == p.alpha);
        CHECK(back.params.n_particles == 6);
        CHECK(back.config.collision_eps == traj.config.collision_eps);
        CHECK(back.accepted_steps == traj.accepted_steps);
        CHECK(back.floored_steps == traj.floored_steps);
        CHECK(back.config.nonsmooth_floor == traj.config.nonsmooth_floor);
        CHECK(bitwise_equal(back.min_pair_dist_seen, traj.min_pair_dist_seen));
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("events survive the sidecar") {
        const auto dir = palign::test::scratch_dir("io_events");
        auto p = palign::test::params(2.0, 5.0, 2, 1);
        ParticleState s(2, 1);
        s.x = {-0.5, 0.5};
        s.v = {1.0 / std::sqrt(8.0), -1.0 / std::sqrt(8.0)};
        IntegratorConfig cfg;
        cfg.collision_eps = 1e-4;
        const auto traj = run(s, p, cfg, 5.0);
        REQUIRE(traj.collided());
        const auto files = io::save_trajectory(traj, dir.string(), "pair");
        const auto back = io::load_trajectory(files.states, files.sidecar);
        REQUIRE(back.events.size() == traj.events.size());
        CHECK(back.events[0].kind == EventKind::Collision);
        CHECK(bitwise_equal(back.events[0].t, traj.events[0].t));
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("measure files round-trip and check their sidecar") {
        const auto dir = palign::test::scratch_dir("io_measure");
        AtomicMeasure mu(2);
        mu.add(std::vector<double>{0.1, -3.0}, 0.25);
        mu.add(std::vector<double>{1.0 / 3.0, 2.0}, 0.75);
        const auto path = (dir / "mu.csv").string();
        io::write_measure(mu, path);
        const auto back = io::read_measure(path);
        CHECK(back.points == mu.points);
        CHECK(back.weights == mu.weights);

        std::ofstream(path + ".json") << R"({"format_version":1,"dim":3,"atoms":2,"mass":1})";
        CHECK_THROWS_AS(io::read_measure(path), IoError);
        std::filesystem::remove(path + ".json");
        CHECK(io::read_measure(path).size() == 2);

        std::ofstream(dir / "bad.csv") << "w,z_0\n-1,0\n";
        CHECK_THROWS_AS(io::read_measure((dir / "bad.csv").string()), DomainError);
        CHECK_THROWS_AS(io::read_measure((dir / "missing.csv").string()), IoError);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("atomic writes leave no temporary behind") {
        const auto dir = palign::test::scratch_dir("io_atomic");
        const auto path = (dir / "sub" / "file.txt").string();
        io::write_file_atomic(path, "one");
        io::write_file_atomic(path, "two");
        CHECK(io::read_file(path) == "two");
        CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
        std::filesystem::remove_all(dir);
    }
}
