#include "palign/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "palign/errors.hpp"

namespace palign::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
        if (i == line.size() || line[i] == sep) {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    return out;
}

double parse_double(std::string_view s, std::size_t line) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        // from_chars rejects "inf"/"nan" spellings produced by printf; accept those explicitly.
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw IoError("line " + std::to_string(line) + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

json params_json(const ModelParams& p) {
    return {{"alpha", p.alpha},           {"p", p.p},
            {"dim", p.dim},               {"n_particles", p.n_particles},
            {"reg_delta", p.reg_delta},   {"collision_safe", p.collision_safe()}};
}

json config_json(const IntegratorConfig& c) {
    json j = {{"rel_tol", c.rel_tol}, {"abs_tol", c.abs_tol}, {"dt_init", c.dt_init},
              {"dt_max", c.dt_max},   {"dt_min", c.dt_min},   {"kappa", c.kappa},
              {"max_steps", c.max_steps}, {"nonsmooth_floor", c.nonsmooth_floor}};
    j["collision_eps"] = c.collision_eps ? json(*c.collision_eps) : json(nullptr);
    return j;
}

json diag_json(const DiagnosticsRecord& d) {
    return {{"t", d.t},
            {"E", d.energy_E},
            {"Dp", d.dissipation_Dp},
            {"Dalpha", d.dissipation_Dalpha},
            {"mean_velocity", d.mean_velocity},
            {"max_speed", d.max_speed},
            {"max_position", d.max_position},
            {"min_pair_dist", d.min_pair_dist}};
}

DiagnosticsRecord diag_from(const json& j) {
    DiagnosticsRecord d;
    d.t = j.at("t").get<double>();
    d.energy_E = j.at("E").get<double>();
    d.dissipation_Dp = j.at("Dp").get<double>();
    d.dissipation_Dalpha = j.at("Dalpha").get<double>();
    d.mean_velocity = j.at("mean_velocity").get<std::vector<double>>();
    d.max_speed = j.at("max_speed").get<double>();
    d.max_position = j.at("max_position").get<double>();
    d.min_pair_dist = j.at("min_pair_dist").get<double>();
    return d;
}

EventKind event_kind_from(const std::string& s) {
    if (s == to_string(EventKind::Collision)) return EventKind::Collision;
    if (s == to_string(EventKind::StallMinDt)) return EventKind::StallMinDt;
    throw IoError("unknown event kind '" + s + "'");
}

}  // namespace

void write_states_csv(std::ostream& out, const std::vector<ParticleState>& states) {
    const std::size_t d = states.empty() ? 1 : states.front().dim;
    out << "t,i";
    for (std::size_t k = 0; k < d; ++k) out << ",x_" << k;
    for (std::size_t k = 0; k < d; ++k) out << ",v_" << k;
    out << '\n';
    for (const auto& s : states) {
        if (s.dim != d) throw IoError("states of different dimension in one file");
        const std::string t = format_double(s.t);
        for (std::size_t i = 0; i < s.n; ++i) {
            out << t << ',' << i;
            for (double a : s.pos(i)) out << ',' << format_double(a);
            for (double a : s.vel(i)) out << ',' << format_double(a);
            out << '\n';
        }
    }
}

std::vector<ParticleState> read_states_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty state file");
    const auto head = split(line);
    if (head.size() < 4 || head[0] != "t" || head[1] != "i" || (head.size() - 2) % 2 != 0)
        throw IoError("state file header must be t,i,x_0..,v_0..");
    const std::size_t d = (head.size() - 2) / 2;
    std::vector<ParticleState> states;
    std::size_t lineno = 1;
    std::vector<double> x(d), v(d);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        if (f.size() != head.size())
            throw IoError("line " + std::to_string(lineno) + ": expected " + std::to_string(head.size()) + " fields");
        const double t = parse_double(f[0], lineno);
        const double idx = parse_double(f[1], lineno);
        for (std::size_t k = 0; k < d; ++k) {
            x[k] = parse_double(f[2 + k], lineno);
            v[k] = parse_double(f[2 + d + k], lineno);
        }
        if (idx == 0.0) {
            states.emplace_back(0, d, t);
        } else if (states.empty() || static_cast<double>(states.back().n) != idx || states.back().t != t) {
            throw IoError("line " + std::to_string(lineno) + ": particle rows out of order");
        }
        auto& s = states.back();
        s.x.insert(s.x.end(), x.begin(), x.end());
        s.v.insert(s.v.end(), v.begin(), v.end());
        ++s.n;
    }
    return states;
}

std::string trajectory_sidecar(const Trajectory& traj) {
    json j;
    j["format_version"] = kFormatVersion;
    j["params"] = params_json(traj.params);
    j["config"] = config_json(traj.config);
    j["events"] = json::array();
    for (const auto& e : traj.events)
        j["events"].push_back({{"t", e.t}, {"kind", to_string(e.kind)}, {"detail", e.detail}});
    j["accepted_steps"] = traj.accepted_steps;
    j["rejected_steps"] = traj.rejected_steps;
    j["floored_steps"] = traj.floored_steps;
    j["min_pair_dist_seen"] = traj.min_pair_dist_seen;
    j["samples"] = json::array();
    for (const auto& s : traj.steps)
        j["samples"].push_back(
            {{"accepted_dt", s.accepted_dt}, {"err_estimate", s.err_estimate}, {"diagnostics", diag_json(s.diag)}});
    return j.dump(1) + "\n";
}

void write_diagnostics_csv(std::ostream& out, const Trajectory& traj) {
    const std::size_t d = traj.params.dim;
    out << "t,E,Dp,Dalpha";
    for (std::size_t k = 0; k < d; ++k) out << ",p_" << k;
    out << ",Vmax,Xmax,dmin\n";
    for (const auto& s : traj.steps) {
        const auto& g = s.diag;
        out << format_double(g.t) << ',' << format_double(g.energy_E) << ',' << format_double(g.dissipation_Dp) << ','
            << format_double(g.dissipation_Dalpha);
        for (double a : g.mean_velocity) out << ',' << format_double(a);
        out << ',' << format_double(g.max_speed) << ',' << format_double(g.max_position) << ','
            << format_double(g.min_pair_dist) << '\n';
    }
}

TrajectoryFiles save_trajectory(const Trajectory& traj, const std::string& dir, const std::string& stem) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    TrajectoryFiles files{(fs::path(dir) / (stem + ".csv")).string(), (fs::path(dir) / (stem + ".json")).string(),
                          (fs::path(dir) / (stem + "_diagnostics.csv")).string()};
    std::vector<ParticleState> states;
    states.reserve(traj.steps.size());
    for (const auto& s : traj.steps) states.push_back(s.state);
    std::ostringstream a, c;
    write_states_csv(a, states);
    write_diagnostics_csv(c, traj);
    write_file_atomic(files.states, a.str());
    write_file_atomic(files.sidecar, trajectory_sidecar(traj));
    write_file_atomic(files.diagnostics, c.str());
    return files;
}

Trajectory load_trajectory(const std::string& states_csv, const std::string& sidecar_json) {
    std::ifstream in(states_csv);
    if (!in) throw IoError("cannot open '" + states_csv + "'");
    auto states = read_states_csv(in);
    json j;
    try {
        j = json::parse(read_file(sidecar_json));
    } catch (const json::exception& e) {
        throw IoError("sidecar '" + sidecar_json + "': " + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kFormatVersion) throw IoError("unsupported format_version");
        Trajectory t;
        const auto& p = j.at("params");
        t.params.alpha = p.at("alpha").get<double>();
        t.params.p = p.at("p").get<double>();
        t.params.dim = p.at("dim").get<std::size_t>();
        t.params.n_particles = p.at("n_particles").get<std::size_t>();
        t.params.reg_delta = p.at("reg_delta").get<double>();
        const auto& c = j.at("config");
        t.config.rel_tol = c.at("rel_tol").get<double>();
        t.config.abs_tol = c.at("abs_tol").get<double>();
        t.config.dt_init = c.at("dt_init").get<double>();
        t.config.dt_max = c.at("dt_max").get<double>();
        t.config.dt_min = c.at("dt_min").get<double>();
        t.config.kappa = c.at("kappa").get<double>();
        t.config.max_steps = c.at("max_steps").get<std::size_t>();
        t.config.nonsmooth_floor = c.at("nonsmooth_floor").get<double>();
        if (!c.at("collision_eps").is_null()) t.config.collision_eps = c.at("collision_eps").get<double>();
        for (const auto& e : j.at("events"))
            t.events.push_back({e.at("t").get<double>(), event_kind_from(e.at("kind").get<std::string>()),
                                e.at("detail").get<std::string>()});
        t.accepted_steps = j.at("accepted_steps").get<std::size_t>();
        t.rejected_steps = j.at("rejected_steps").get<std::size_t>();
        t.floored_steps = j.at("floored_steps").get<std::size_t>();
        t.min_pair_dist_seen = j.at("min_pair_dist_seen").get<double>();
        const auto& samples = j.at("samples");
        if (samples.size() != states.size()) throw IoError("sidecar and state file disagree on the sample count");
        for (std::size_t k = 0; k < states.size(); ++k) {
            TrajectoryStep st;
            st.state = std::move(states[k]);
            st.accepted_dt = samples[k].at("accepted_dt").get<double>();
            st.err_estimate = samples[k].at("err_estimate").get<double>();
            st.diag = diag_from(samples[k].at("diagnostics"));
            t.steps.push_back(std::move(st));
        }
        return t;
    } catch (const json::exception& e) {
        throw IoError("sidecar '" + sidecar_json + "': " + e.what());
    }
}

void write_measure(const AtomicMeasure& mu, const std::string& csv_path) {
    std::ostringstream out;
    out << 'w';
    for (std::size_t k = 0; k < mu.dim; ++k) out << ",z_" << k;
    out << '\n';
    for (std::size_t i = 0; i < mu.size(); ++i) {
        out << format_double(mu.weights[i]);
        for (double a : mu.point(i)) out << ',' << format_double(a);
        out << '\n';
    }
    write_file_atomic(csv_path, out.str());
    const json side = {{"format_version", kFormatVersion}, {"dim", mu.dim}, {"atoms", mu.size()}, {"mass", mu.mass()}};
    write_file_atomic(csv_path + ".json", side.dump(1) + "\n");
}

AtomicMeasure read_measure(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open '" + csv_path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + csv_path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto head = split(line);
    if (head.size() < 2 || head[0] != "w") throw IoError("'" + csv_path + "': header must be w,z_0,...");
    AtomicMeasure mu(head.size() - 1);
    std::vector<double> z(mu.dim);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        if (f.size() != head.size())
            throw IoError("'" + csv_path + "' line " + std::to_string(lineno) + ": wrong field count");
        const double w = parse_double(f[0], lineno);
        for (std::size_t k = 0; k < mu.dim; ++k) z[k] = parse_double(f[1 + k], lineno);
        mu.add(z, w);
    }
    mu.validate();
    const std::string side = csv_path + ".json";
    if (fs::exists(side)) {
        try {
            const json j = json::parse(read_file(side));
            if (j.at("dim").get<std::size_t>() != mu.dim || j.at("atoms").get<std::size_t>() != mu.size())
                throw IoError("'" + side + "' does not describe '" + csv_path + "'");
        } catch (const json::exception& e) {
            throw IoError("'" + side + "': " + e.what());
        }
    }
    return mu;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.flush()) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace palign::io
