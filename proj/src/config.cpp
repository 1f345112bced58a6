#include "palign/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "palign/errors.hpp"
#include "palign/io.hpp"

namespace palign::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("<syntax>", "line " + std::to_string(line) + ", column " + std::to_string(col) +
                                          ": malformed JSON");
    }
}

/// Typed access to one JSON object with the path of every field for error messages.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    /// Rejects keys that were never looked up; call after reading every field.
    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }

    bool has(const std::string& key) const {
        seen_.insert(key);
        return j_.contains(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& raw(const std::string& key) const {
        if (!has(key)) throw ConfigError(field(key), "missing");
        return j_.at(key);
    }

    Node child(const std::string& key) const { return Node(raw(key), field(key)); }

    double num(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(field(key), "must be finite");
        return x;
    }
    double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

    std::uint64_t uint(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError(field(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }
    std::uint64_t uint(const std::string& key, std::uint64_t fallback) const { return has(key) ? uint(key) : fallback; }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
        return v.get<bool>();
    }

    std::string str(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
        return v.get<std::string>();
    }
    std::string str(const std::string& key, const std::string& fallback) const {
        return has(key) ? str(key) : fallback;
    }

    std::vector<double> nums(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(v[i].get<double>());
            if (!std::isfinite(out.back()))
                throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "must be finite");
        }
        return out;
    }

    std::vector<std::uint64_t> uints(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected an array of integers");
        std::vector<std::uint64_t> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number_unsigned())
                throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
            out.push_back(v[i].get<std::uint64_t>());
        }
        return out;
    }

    const json& value() const { return j_; }
    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

template <class F>
void rethrow_as(const std::string& field, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(field, e.what());
    }
}

ModelParams read_params(const Node& n, bool need_count) {
    ModelParams p;
    p.alpha = n.num("alpha");
    p.p = n.num("p");
    p.dim = n.uint("dim", 1);
    p.n_particles = need_count ? n.uint("n_particles") : n.uint("n_particles", 2);
    p.reg_delta = n.num("reg_delta", 0.0);
    n.finish();
    if (p.alpha < 1.0) throw ConfigError(n.field("alpha"), "must be >= 1");
    if (p.p < 1.0) throw ConfigError(n.field("p"), "must be >= 1");
    if (p.dim < 1) throw ConfigError(n.field("dim"), "must be >= 1");
    if (p.n_particles < 2) throw ConfigError(n.field("n_particles"), "must be >= 2");
    if (p.reg_delta < 0.0) throw ConfigError(n.field("reg_delta"), "must be >= 0");
    return p;
}

IntegratorConfig read_integrator(const Node& n) {
    IntegratorConfig c;
    c.rel_tol = n.num("rel_tol", c.rel_tol);
    c.abs_tol = n.num("abs_tol", c.abs_tol);
    c.dt_max = n.num("dt_max", c.dt_max);
    c.dt_init = n.num("dt_init", std::min(c.dt_init, c.dt_max));
    c.dt_min = n.num("dt_min", c.dt_min);
    c.kappa = n.num("kappa", c.kappa);
    c.max_steps = n.uint("max_steps", c.max_steps);
    c.nonsmooth_floor = n.num("nonsmooth_floor", c.nonsmooth_floor);
    if (n.has("collision_eps")) c.collision_eps = n.num("collision_eps");
    n.finish();
    rethrow_as(n.path(), [&] { c.validate(); });
    return c;
}

DensitySpec read_density(const Node& n, std::size_t dim) {
    DensitySpec r;
    const std::string kind = n.str("kind");
    if (kind == "uniform_box") {
        r.kind = DensitySpec::Kind::UniformBox;
        r.lo = n.nums("lo");
        r.hi = n.nums("hi");
        if (r.lo.size() != dim) throw ConfigError(n.field("lo"), "needs " + std::to_string(dim) + " entries");
        if (r.hi.size() != dim) throw ConfigError(n.field("hi"), "needs " + std::to_string(dim) + " entries");
    } else if (kind == "uniform_ball" || kind == "truncated_gaussian") {
        r.kind = kind == "uniform_ball" ? DensitySpec::Kind::UniformBall : DensitySpec::Kind::TruncatedGaussian;
        if (n.has("center")) {
            r.center = n.nums("center");
            if (r.center.size() != dim)
                throw ConfigError(n.field("center"), "needs " + std::to_string(dim) + " entries");
        }
        r.radius = n.num("radius");
        if (r.radius < 0.0) throw ConfigError(n.field("radius"), "must be >= 0");
        if (r.kind == DensitySpec::Kind::TruncatedGaussian) {
            r.sigma = n.num("sigma");
            if (r.sigma < 0.0) throw ConfigError(n.field("sigma"), "must be >= 0");
        }
    } else if (kind == "mixture") {
        r.kind = DensitySpec::Kind::Mixture;
        const auto& comps = n.raw("components");
        if (!comps.is_array() || comps.empty()) throw ConfigError(n.field("components"), "expected a non-empty array");
        for (std::size_t i = 0; i < comps.size(); ++i)
            r.components.push_back(read_density(Node(comps[i], n.field("components") + "[" + std::to_string(i) + "]"), dim));
        if (n.has("weights")) {
            r.mix_weights = n.nums("weights");
            if (r.mix_weights.size() != r.components.size())
                throw ConfigError(n.field("weights"), "needs one weight per component");
            for (double w : r.mix_weights)
                if (w < 0.0) throw ConfigError(n.field("weights"), "weights must be >= 0");
        }
    } else {
        throw ConfigError(n.field("kind"), "unknown density '" + kind +
                                               "' (uniform_box, uniform_ball, truncated_gaussian, mixture)");
    }
    n.finish();
    return r;
}

VelocitySpec read_velocity(const Node& n, std::size_t dim) {
    VelocitySpec u;
    const std::string kind = n.str("kind");
    if (kind == "constant") {
        u.kind = VelocitySpec::Kind::Constant;
        u.value = n.nums("value");
        if (u.value.size() != dim) throw ConfigError(n.field("value"), "needs " + std::to_string(dim) + " entries");
    } else if (kind == "linear") {
        u.kind = VelocitySpec::Kind::Linear;
        if (n.has("matrix")) {
            const auto& m = n.raw("matrix");
            if (!m.is_array() || m.size() != dim) throw ConfigError(n.field("matrix"), "expected d rows");
            for (std::size_t a = 0; a < dim; ++a) {
                const std::string row = n.field("matrix") + "[" + std::to_string(a) + "]";
                if (!m[a].is_array() || m[a].size() != dim) throw ConfigError(row, "expected d numbers");
                for (const auto& x : m[a]) {
                    if (!x.is_number()) throw ConfigError(row, "expected numbers");
                    u.matrix.push_back(x.get<double>());
                }
            }
        }
        if (n.has("offset")) {
            u.value = n.nums("offset");
            if (u.value.size() != dim) throw ConfigError(n.field("offset"), "needs " + std::to_string(dim) + " entries");
        }
    } else if (kind == "shear") {
        u.kind = VelocitySpec::Kind::Shear;
        if (dim < 2) throw ConfigError(n.field("kind"), "shear needs dim >= 2");
        u.rate = n.num("rate", 1.0);
    } else if (kind == "two_cluster") {
        u.kind = VelocitySpec::Kind::TwoCluster;
        u.speed = n.num("speed", 1.0);
        u.split = n.num("split", 0.0);
        u.converging = n.flag("converging", false);
    } else {
        throw ConfigError(n.field("kind"), "unknown velocity field '" + kind + "' (constant, linear, shear, two_cluster)");
    }
    n.finish();
    return u;
}

InitialDataSpec read_initial(const Node& n, std::size_t dim) {
    InitialDataSpec s;
    s.dim = dim;
    s.rho0 = read_density(n.child("rho0"), dim);
    s.u0 = read_velocity(n.child("u0"), dim);
    n.finish();
    return s;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / path).string();
}

std::string dir_of(const std::string& path) {
    const auto p = fs::path(path).parent_path();
    return p.empty() ? std::string(".") : p.string();
}

std::string read_config_file(const std::string& path) {
    try {
        return io::read_file(path);
    } catch (const IoError& e) {
        throw ConfigError("<file>", e.what());
    }
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& base_dir) {
    const json j = parse_json(text);
    const Node root(j, "");
    ScenarioConfig c;
    const std::string kind = root.str("scenario");
    if (kind == "two_particle") c.kind = ScenarioKind::TwoParticle;
    else if (kind == "random_cloud") c.kind = ScenarioKind::RandomCloud;
    else if (kind == "two_cluster") c.kind = ScenarioKind::TwoCluster;
    else if (kind == "from_file") c.kind = ScenarioKind::FromFile;
    else throw ConfigError("scenario", "unknown scenario '" + kind + "' (two_particle, random_cloud, two_cluster, from_file)");

    c.params = read_params(root.child("params"), c.kind != ScenarioKind::TwoParticle);
    c.integrator = root.has("integrator") ? read_integrator(root.child("integrator")) : IntegratorConfig{};
    c.t_end = root.num("t_end");
    if (c.t_end < 0.0) throw ConfigError("t_end", "must be >= 0");
    c.stride = root.uint("stride", 1);
    if (c.stride < 1) throw ConfigError("stride", "must be >= 1");
    c.seed = root.uint("seed", 0);
    c.out = resolve(base_dir, root.str("out", c.out));
    if (root.has("emit")) {
        const Node e = root.child("emit");
        c.emit.trajectory = e.flag("trajectory", true);
        c.emit.diagnostics = e.flag("diagnostics", true);
        c.emit.plots = e.flag("plots", true);
        e.finish();
    }

    switch (c.kind) {
    case ScenarioKind::TwoParticle: {
        const Node t = root.child("two_particle");
        c.r0 = t.num("r0");
        if (!(c.r0 > 0.0)) throw ConfigError("two_particle.r0", "must be > 0");
        const bool matched = t.flag("matched", false);
        if (t.has("rdot0")) {
            if (matched) throw ConfigError("two_particle.rdot0", "give either rdot0 or matched, not both");
            c.rdot0 = t.num("rdot0");
        } else if (!matched) {
            throw ConfigError("two_particle.rdot0", "missing (or set matched: true)");
        }
        t.finish();
        if (c.params.n_particles != 2) throw ConfigError("params.n_particles", "two_particle needs exactly 2");
        break;
    }
    case ScenarioKind::RandomCloud:
        if (root.has("random_cloud")) {
            const Node r = root.child("random_cloud");
            c.half_width = r.num("half_width", 1.0);
            c.speed = r.num("speed", 1.0);
            r.finish();
            if (!(c.half_width > 0.0)) throw ConfigError("random_cloud.half_width", "must be > 0");
            if (c.speed < 0.0) throw ConfigError("random_cloud.speed", "must be >= 0");
        }
        break;
    case ScenarioKind::TwoCluster:
        c.initial = read_initial(root.child("initial"), c.params.dim);
        if (c.initial.u0.kind != VelocitySpec::Kind::TwoCluster)
            throw ConfigError("initial.u0.kind", "two_cluster scenario needs a two_cluster velocity field");
        break;
    case ScenarioKind::FromFile:
        c.state_file = resolve(base_dir, root.str("state_file"));
        if (!fs::exists(c.state_file)) throw ConfigError("state_file", "'" + c.state_file + "' does not exist");
        break;
    }
    root.finish();
    rethrow_as("params", [&] { c.params.validate(); });
    return c;
}

ScenarioConfig load_scenario(const std::string& path) { return parse_scenario(read_config_file(path), dir_of(path)); }

ParticleState initial_state(const ScenarioConfig& c) {
    const std::size_t d = c.params.dim;
    switch (c.kind) {
    case ScenarioKind::TwoParticle: {
        double rdot = 0.0;
        if (c.rdot0) {
            rdot = *c.rdot0;
        } else {
            rethrow_as("two_particle.matched", [&] {
                rdot = c.params.alpha == 1.0 ? oracle::matched_initial_velocity_alpha1(c.r0, c.params)
                                             : oracle::matched_initial_velocity(c.r0, c.params);
            });
        }
        ParticleState s(2, d, 0.0);
        s.x[0] = -0.5 * c.r0;
        s.x[d] = 0.5 * c.r0;
        s.v[0] = -0.5 * rdot;
        s.v[d] = 0.5 * rdot;
        return s;
    }
    case ScenarioKind::RandomCloud:
        return random_cloud(c.params.n_particles, d, c.seed, c.half_width, c.speed);
    case ScenarioKind::TwoCluster: {
        InitialDataSpec spec = c.initial;
        spec.seed = c.seed;
        ParticleState s;
        rethrow_as("initial", [&] { s = atomize(spec, c.params.n_particles); });
        return s;
    }
    case ScenarioKind::FromFile: {
        std::ifstream in(c.state_file);
        if (!in) throw ConfigError("state_file", "cannot open '" + c.state_file + "'");
        std::vector<ParticleState> states;
        rethrow_as("state_file", [&] { states = io::read_states_csv(in); });
        if (states.empty()) throw ConfigError("state_file", "no states in '" + c.state_file + "'");
        ParticleState s = states.back();
        if (s.n != c.params.n_particles || s.dim != d)
            throw ConfigError("state_file", "state shape does not match params.n_particles and params.dim");
        s.t = 0.0;
        return s;
    }
    }
    throw ConfigError("scenario", "unhandled scenario");
}

StudyFile parse_study(const std::string& text, const std::string& base_dir) {
    const json j = parse_json(text);
    const Node root(j, "");
    StudyFile f;
    auto& s = f.study;
    s.params = read_params(root.child("params"), false);
    s.spec = read_initial(root.child("spec"), s.params.dim);
    s.integrator = root.has("integrator") ? read_integrator(root.child("integrator")) : IntegratorConfig{};
    for (double n : root.nums("n_list")) {
        if (n < 2 || n != std::floor(n)) throw ConfigError("n_list", "entries must be integers >= 2");
        s.n_list.push_back(static_cast<std::size_t>(n));
    }
    s.horizon = root.num("T");
    if (!(s.horizon > 0.0)) throw ConfigError("T", "must be > 0");
    if (root.has("checkpoints")) {
        s.checkpoints = root.nums("checkpoints");
        for (double t : s.checkpoints)
            if (t < 0.0 || t > s.horizon) throw ConfigError("checkpoints", "entries must lie in [0, T]");
    }
    s.h = root.num("h", s.h);
    if (!(s.h > 0.0)) throw ConfigError("h", "must be > 0");
    s.seeds = root.uints("seeds");
    if (s.seeds.empty()) throw ConfigError("seeds", "needs at least one seed");
    s.phase_space = root.flag("phase_space", true);
    s.dbl.support_cap = root.uint("support_cap", s.dbl.support_cap);
    s.jobs = root.uint("jobs", 1);
    f.out = resolve(base_dir, root.str("out", f.out));
    s.cache_dir = root.has("cache_dir") ? resolve(base_dir, root.str("cache_dir")) : (fs::path(f.out) / "runs").string();
    root.finish();
    rethrow_as("params", [&] {
        ModelParams p = s.params;
        p.validate();
    });
    return f;
}

StudyFile load_study(const std::string& path) { return parse_study(read_config_file(path), dir_of(path)); }

oracle::SweepGrid parse_grid(const std::string& text) {
    const json j = parse_json(text);
    const Node root(j, "");
    oracle::SweepGrid g;
    g.alpha = root.has("alpha") ? root.nums("alpha") : std::vector<double>{};
    g.p_offset = root.has("p_offset") ? root.nums("p_offset") : std::vector<double>{};
    g.r0 = root.has("r0") ? root.nums("r0") : std::vector<double>{};
    g.horizon = root.num("horizon", g.horizon);
    g.tol = root.num("tol", g.tol);
    root.finish();
    for (double a : g.alpha)
        if (a < 1.0) throw ConfigError("alpha", "entries must be >= 1");
    for (double r : g.r0)
        if (!(r > 0.0)) throw ConfigError("r0", "entries must be > 0");
    for (std::size_t i = 0; i < g.alpha.size(); ++i)
        for (double o : g.p_offset)
            if (g.alpha[i] + o < 1.0) throw ConfigError("p_offset", "alpha + p_offset must be >= 1");
    if (!(g.horizon > 0.0)) throw ConfigError("horizon", "must be > 0");
    if (!(g.tol > 0.0)) throw ConfigError("tol", "must be > 0");
    return g;
}

oracle::SweepGrid load_grid(const std::string& path) { return parse_grid(read_config_file(path)); }

}  // namespace palign::config
