#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "geolab/iteration_lab.hpp"
#include "geolab/penalization.hpp"

namespace geolab {

using Json = nlohmann::json;

struct PenaltyConfig {
    std::vector<double> radii;
    std::vector<double> amplitudes{1.0};
    double width = 1.0;
    int alpha = 0;
};

/// Reference closed geodesic: periodic sweep through `base` along `coord`.
struct CircleConfig {
    std::vector<double> base;
    int coord = -1;
    int wraps = 1;
};

struct ExperimentConfig {
    std::string source = "<defaults>";
    Json manifold = {{"type", "flat_torus"}, {"a", 1.0}, {"b", 1.0}};
    std::vector<double> exhaustion;
    int k = 32;
    int m_max = 12;
    std::vector<int> primes{2, 3, 5, 7, 11};
    std::vector<double> eps;
    int seeds = 20;
    std::uint64_t seed = 1;
    double energy_cap = 100.0;
    double radial_max = 3.0;
    std::map<std::string, double> tolerances;
    std::string out = "out";
    std::vector<std::string> formats{"csv", "json"};
    PenaltyConfig penalty;
    std::optional<CircleConfig> circle;
    ModelLandscape model;
    int samples = 2000;
    int m = 0;       ///< windows: single window index, 0 for 1..m_max
    double ell = 0;  ///< windows: base length, 0 reads the model chart
    std::vector<double> candidates;
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

template <class T>
T field(const Json& j, const std::string& path, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError("config field '" + path + key + "': " + e.what());
    }
}

}  // namespace detail

inline const std::vector<std::string>& tolerance_names() {
    static const std::vector<std::string> names{"tau_grad",      "tau_dedup",   "newton_switch", "kernel_filter",
                                                "energy_floor",  "tau_ball",    "probe_radius",  "delta_probe",
                                                "conjugate_tol", "armijo"};
    return names;
}

inline void set_tolerance(ExperimentConfig& c, const std::string& name, double value) {
    const auto& names = tolerance_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw ConfigError("unknown tolerance '" + name + "'");
    if (!std::isfinite(value) || value < 0) throw ConfigError("tolerance '" + name + "' must be finite and >= 0");
    c.tolerances[name] = value;
}

/// NAME=VALUE from the command line.
inline void apply_tolerance_override(ExperimentConfig& c, const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw ConfigError("--tolerance expects NAME=VALUE, got '" + arg + "'");
    double v = 0;
    try {
        std::size_t used = 0;
        v = std::stod(arg.substr(eq + 1), &used);
        if (used != arg.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("--tolerance " + arg + ": value is not a number");
    }
    set_tolerance(c, arg.substr(0, eq), v);
}

inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>") {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(source + ": " + detail::line_col(text, e.byte) + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(source + ": top level must be an object");
    ExperimentConfig c;
    c.source = source;
    if (j.contains("manifold")) {
        if (!j["manifold"].is_object() || !j["manifold"].contains("type"))
            throw ConfigError(source + ": 'manifold' needs an object with a 'type'");
        c.manifold = j["manifold"];
    }
    c.exhaustion = detail::field(j, "", "exhaustion", c.exhaustion);
    c.k = detail::field(j, "", "k", c.k);
    c.m_max = detail::field(j, "", "m_max", c.m_max);
    c.primes = detail::field(j, "", "primes", c.primes);
    c.eps = detail::field(j, "", "eps", c.eps);
    c.seeds = detail::field(j, "", "seeds", c.seeds);
    c.seed = detail::field(j, "", "seed", c.seed);
    c.energy_cap = detail::field(j, "", "energy_cap", c.energy_cap);
    c.radial_max = detail::field(j, "", "radial_max", c.radial_max);
    c.out = detail::field(j, "", "out", c.out);
    c.formats = detail::field(j, "", "formats", c.formats);
    c.samples = detail::field(j, "", "samples", c.samples);
    c.m = detail::field(j, "", "m", c.m);
    c.ell = detail::field(j, "", "ell", c.ell);
    c.candidates = detail::field(j, "", "candidates", c.candidates);
    if (j.contains("tolerances")) {
        if (!j["tolerances"].is_object()) throw ConfigError(source + ": 'tolerances' must be an object");
        for (const auto& [name, v] : j["tolerances"].items()) {
            if (!v.is_number()) throw ConfigError(source + ": tolerance '" + name + "' must be a number");
            set_tolerance(c, name, v.get<double>());
        }
    }
    if (j.contains("penalty")) {
        const Json& p = j["penalty"];
        c.penalty.radii = detail::field(p, "penalty.", "radii", c.penalty.radii);
        c.penalty.amplitudes = detail::field(p, "penalty.", "amplitudes", c.penalty.amplitudes);
        c.penalty.width = detail::field(p, "penalty.", "width", c.penalty.width);
        c.penalty.alpha = detail::field(p, "penalty.", "alpha", c.penalty.alpha);
    }
    if (j.contains("circle")) {
        const Json& p = j["circle"];
        CircleConfig cc;
        cc.base = detail::field(p, "circle.", "base", cc.base);
        cc.coord = detail::field(p, "circle.", "coord", cc.coord);
        cc.wraps = detail::field(p, "circle.", "wraps", cc.wraps);
        c.circle = cc;
    }
    if (j.contains("model")) {
        const Json& p = j["model"];
        ModelLandscape& ml = c.model;
        ml.k = detail::field(p, "model.", "k", ml.k);
        ml.R0 = detail::field(p, "model.", "R0", ml.R0);
        ml.a = detail::field(p, "model.", "a", ml.a);
        ml.b = detail::field(p, "model.", "b", ml.b);
        ml.radius_q = detail::field(p, "model.", "radius_q", ml.radius_q);
        ml.radius_p = detail::field(p, "model.", "radius_p", ml.radius_p);
        ml.bprime_dim = detail::field(p, "model.", "bprime_dim", ml.bprime_dim);
    }
    if (c.k < 3) throw ConfigError(source + ": 'k' must be at least 3");
    if (c.m_max < 1) throw ConfigError(source + ": 'm_max' must be positive");
    if (c.seeds < 0) throw ConfigError(source + ": 'seeds' must be >= 0");
    for (int p : c.primes)
        if (p < 2) throw ConfigError(source + ": 'primes' entries must be >= 2");
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

inline ManifoldPtr make_manifold(const ExperimentConfig& c) {
    const Json& j = c.manifold;
    const std::string type = j.at("type").get<std::string>();
    std::shared_ptr<Manifold> m;
    if (type == "flat_plane") {
        auto p = std::make_shared<FlatPlane>();
        p->set_injectivity_floor(detail::field(j, "manifold.", "injectivity_floor", 1.0));
        m = p;
    } else if (type == "flat_torus") {
        m = std::make_shared<FlatTorus>(detail::field(j, "manifold.", "a", 1.0), detail::field(j, "manifold.", "b", 1.0));
    } else if (type == "sphere") {
        m = std::make_shared<RoundSphere>(detail::field(j, "manifold.", "radius", 1.0),
                                          detail::field(j, "manifold.", "pole_margin", 1e-3));
    } else if (type == "hyperboloid" || type == "hyperboloid_one_sheet") {
        m = SurfaceOfRevolution::hyperboloid();
    } else if (type == "polynomial_revolution" || type == "surface_of_revolution") {
        const auto coeffs = detail::field(j, "manifold.", "coefficients", std::vector<double>{});
        m = SurfaceOfRevolution::polynomial(coeffs, detail::field(j, "manifold.", "injectivity_floor", 0.5),
                                            detail::field(j, "manifold.", "z_min", -3.0),
                                            detail::field(j, "manifold.", "z_max", 3.0));
    } else {
        throw ConfigError("config field 'manifold.type': unknown manifold '" + type + "'");
    }
    if (!c.exhaustion.empty()) m->set_exhaustion(c.exhaustion);
    return m;
}

inline double tolerance(const ExperimentConfig& c, const std::string& name, double fallback) {
    const auto it = c.tolerances.find(name);
    return it == c.tolerances.end() ? fallback : it->second;
}

inline SearchOptions search_options(const ExperimentConfig& c) {
    SearchOptions o;
    o.energy_cap = c.energy_cap;
    o.energy_floor = tolerance(c, "energy_floor", o.energy_floor);
    o.tau_dedup = tolerance(c, "tau_dedup", o.tau_dedup);
    o.descent.tau_grad = tolerance(c, "tau_grad", o.descent.tau_grad);
    o.descent.newton_switch = tolerance(c, "newton_switch", o.descent.newton_switch);
    o.descent.kernel_filter = tolerance(c, "kernel_filter", o.descent.kernel_filter);
    o.descent.armijo = tolerance(c, "armijo", o.descent.armijo);
    o.tau_ball = tolerance(c, "tau_ball", o.tau_ball);
    o.probe_radius = tolerance(c, "probe_radius", o.probe_radius);
    o.delta_probe = tolerance(c, "delta_probe", o.delta_probe);
    o.primes = c.primes;
    o.m_max = c.m_max;
    o.seed = c.seed;
    return o;
}

/// The configured reference circle, or the natural one of the named model.
inline std::optional<CircleConfig> reference_circle(const ExperimentConfig& c) {
    if (c.circle) return c.circle;
    const std::string type = c.manifold.at("type").get<std::string>();
    if (type == "sphere") return CircleConfig{{std::numbers::pi / 2, 0.0}, 1, 1};
    if (type == "flat_torus") return CircleConfig{{0.0, 0.0}, 0, 1};
    if (type == "hyperboloid" || type == "hyperboloid_one_sheet" || type == "polynomial_revolution" ||
        type == "surface_of_revolution")
        return CircleConfig{{0.0, 0.0}, 1, 1};
    return std::nullopt;
}

inline BrokenLoop reference_loop(const Manifold& m, const CircleConfig& cc, int k) {
    if (static_cast<int>(cc.base.size()) != m.dimension())
        throw ConfigError("config field 'circle.base': expected " + std::to_string(m.dimension()) + " coordinates");
    if (cc.coord < 0 || cc.coord >= m.dimension()) throw ConfigError("config field 'circle.coord': out of range");
    Point base(m.dimension());
    for (int i = 0; i < m.dimension(); ++i) base(i) = cc.base[i];
    return periodic_sweep_seed(m, base, cc.coord, cc.wraps, k);
}

/// Random seeds, plus sweeps along each periodic coordinate through the
/// reference base point with 1..3 wraps.
inline std::vector<BrokenLoop> search_seeds(const Manifold& m, const ExperimentConfig& c) {
    std::mt19937_64 rng(c.seed);
    std::vector<BrokenLoop> seeds;
    if (const auto rc = reference_circle(c)) {
        const Vector per = m.periods();
        for (int coord = 0; coord < m.dimension(); ++coord) {
            if (!(per(coord) > 0)) continue;
            for (int w = 1; w <= 3; ++w) {
                CircleConfig cc = *rc;
                cc.coord = coord;
                cc.wraps = w;
                seeds.push_back(perturbed(reference_loop(m, cc, c.k * w), 1e-3, rng));
            }
        }
    }
    for (int i = 0; i < c.seeds; ++i) seeds.push_back(random_seed(m, rng, c.radial_max, c.k, 0.5));
    return seeds;
}

inline PenaltySchedule make_schedule(const ExperimentConfig& c, const Manifold& m) {
    if (!c.penalty.radii.empty()) return PenaltySchedule(c.penalty.radii, c.penalty.amplitudes, c.penalty.width);
    if (m.exhaustion().empty()) throw ConfigError("penalty: give 'penalty.radii' or 'exhaustion'");
    return PenaltySchedule(m.exhaustion(), c.penalty.amplitudes, c.penalty.width);
}

// ---- output ----

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Comment lines prepended to every CSV: seed, tolerance overrides, and a
/// timestamp (the only field that changes between identical reruns).
inline std::string csv_header(const ExperimentConfig& c, const std::string& what) {
    std::ostringstream os;
    os << "# geolab " << what << " seed=" << c.seed << " config=" << c.source << '\n';
    os << "# manifold=" << c.manifold.dump() << '\n';
    os << "# tolerances:";
    for (const auto& [k, v] : c.tolerances) os << ' ' << k << '=' << detail::shortest(v);
    os << '\n';
    os << "# timestamp=" << utc_timestamp() << '\n';
    return os.str();
}

/// Writes to a sibling temporary file, then renames it over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

/// Drops the comment lines, leaving what reruns must reproduce byte for byte.
inline std::string csv_body(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line))
        if (line.empty() || line[0] != '#') out << line << '\n';
    return out.str();
}

inline Json config_json(const ExperimentConfig& c) {
    return {{"source", c.source},   {"manifold", c.manifold}, {"k", c.k},           {"m_max", c.m_max},
            {"primes", c.primes},   {"eps", c.eps},           {"seeds", c.seeds},   {"seed", c.seed},
            {"tolerances", c.tolerances}};
}

inline Json to_json(const BrokenLoop& loop) {
    Json nodes = Json::array();
    for (int i = 0; i < loop.k(); ++i) {
        Json node = Json::array();
        for (int j = 0; j < loop.dim(); ++j) node.push_back(loop.nodes(j, i));
        nodes.push_back(node);
    }
    return nodes;
}

inline Json to_json(const CriticalCircle& c) {
    const auto& r = c.indices;
    const auto& cert = c.certificate;
    Json mu = Json::object();
    for (const auto& [m, s] : cert.mu_sign) mu[std::to_string(m)] = s;
    return {{"energy", c.energy},
            {"length", c.length},
            {"gradient_norm", c.gradient_norm},
            {"multiplicity", c.multiplicity},
            {"indices_decided", c.indices_decided},
            {"ind", r.ind},
            {"nul", r.nul},
            {"ind_omega", r.ind_omega},
            {"nul_omega", r.nul_omega},
            {"average_index", std::isfinite(r.average_index) ? Json(r.average_index) : Json()},
            {"isolated", to_string(c.isolated)},
            {"certificate",
             {{"kind", to_string(cert.kind)},
              {"degree", cert.degree},
              {"mu_sign", mu},
              {"inclusion_injectivity", cert.inclusion_injectivity},
              {"hypothesis_i_star", cert.hypothesis_i_star},
              {"hypothesis_ii", cert.hypothesis_ii},
              {"ball_certified", cert.ball.certified},
              {"note", cert.note}}},
            {"nodes", to_json(c.representative)}};
}

inline Json to_json(const Witness& w) {
    Json p = Json::array();
    for (const auto& v : w.p) p.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    return {{"value", w.value}, {"s", w.s}, {"q", std::vector<double>(w.q.data(), w.q.data() + w.q.size())}, {"p", p}};
}

inline Json to_json(const HomotopyBudget& b) {
    return {{"c", b.c},         {"ell", b.ell},         {"eps0", b.eps0},     {"eps", b.eps},
            {"delta", b.delta}, {"mu", b.mu},           {"m_bar", b.m_bar},   {"rho_3delta", b.rho_3delta},
            {"binding", b.binding}, {"samples", b.samples}, {"rho_lipschitz", b.envelope.lipschitz}};
}

inline Json to_json(const CycleTrace& t) {
    return {{"m", t.m},
            {"budget", to_json(t.budget)},
            {"samples", t.samples},
            {"s_steps", t.s_steps},
            {"max_boundary", to_json(t.boundary)},
            {"max_final", to_json(t.final)},
            {"max_all", to_json(t.overall)},
            {"bound_final", t.bound_final},
            {"bound_all", t.bound_overall},
            {"boundary_ok", t.boundary_ok},
            {"final_ok", t.final_ok},
            {"all_ok", t.overall_ok},
            {"homotopy_ok", t.homotopy.ok()},
            {"pass", t.ok()}};
}

}  // namespace geolab
