#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "palign/model.hpp"

namespace palign::test {

/// Random non-collisional state with positions and velocities uniform in [-1, 1]^d.
inline ParticleState random_state(std::size_t n, std::size_t d, std::uint64_t seed, double spread = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-spread, spread);
    ParticleState s(n, d);
    for (auto& a : s.x) a = u(rng);
    for (auto& a : s.v) a = u(rng);
    return s;
}

inline ModelParams params(double alpha, double p, std::size_t n, std::size_t d, double reg = 0.0) {
    ModelParams m;
    m.alpha = alpha;
    m.p = p;
    m.n_particles = n;
    m.dim = d;
    m.reg_delta = reg;
    return m;
}

/// Fresh per-process scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("palign_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace palign::test
