// config.hpp: run configuration: INI parsing with units, validation and
// canonical serialization.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vaet/bath.hpp"
#include "vaet/common.hpp"
#include "vaet/hilbert.hpp"
#include "vaet/propagator.hpp"

namespace vaet {

struct SweepAxis {
    std::string name; // epsilon | gamma | delta | omega_v
    double min{0.0}, max{1.0};
    int n_points{2};
    bool log_spacing{false};

    std::vector<double> values() const {
        std::vector<double> v(static_cast<std::size_t>(n_points));
        for (int i = 0; i < n_points; ++i) {
            const double f = n_points > 1 ? double(i) / double(n_points - 1) : 0.0;
            v[std::size_t(i)] = log_spacing ? min * std::pow(max / min, f) : min + (max - min) * f;
        }
        return v;
    }
    bool operator==(const SweepAxis&) const = default;
};

enum class ExecutionOrder { Natural, Reverse, Shuffled };

struct SweepSettings {
    std::vector<SweepAxis> axes;
    double budget{5e7};           // max total trajectories (points x n_traj)
    ExecutionOrder order{ExecutionOrder::Natural};
    double tail_fraction{0.2};
    bool operator==(const SweepSettings&) const = default;
};

struct RunConfig {
    SystemParams system;
    BathSpec bath;
    bool bath_given{false};
    PropagatorConfig propagation;
    CouplingKind coupling_kind{CouplingKind::Diagonal};
    double duration_ps{1.0};
    LambdaConvention lambda_convention{LambdaConvention::Integral};
    std::string recipe;
    std::string out_dir;
    bool write_full_rho{false};
    SweepSettings sweep;

    // Propagator settings with derived step count and coupling.
    PropagatorConfig resolved_propagation() const {
        PropagatorConfig p = propagation;
        p.coupling = coupling_kind;
        const double steps = units::ps_to_internal(duration_ps) / p.dt;
        p.n_steps = std::size_t(std::max(1.0, std::round(steps)));
        p.keep_full_rho = write_full_rho;
        return p;
    }
};

inline bool operator==(const SystemParams& a, const SystemParams& b) {
    return a.epsilon == b.epsilon && a.delta == b.delta && a.omega_v == b.omega_v && a.gamma == b.gamma &&
           a.fock_dim == b.fock_dim;
}
inline bool operator==(const BathSpec& a, const BathSpec& b) {
    return a.family == b.family && a.alpha == b.alpha && a.omega_c == b.omega_c && a.omega_0 == b.omega_0 &&
           a.beta == b.beta && a.temperature == b.temperature && a.gamma_E == b.gamma_E;
}
inline bool operator==(const PropagatorConfig& a, const PropagatorConfig& b) {
    return a.scheme == b.scheme && a.dt == b.dt && a.n_traj == b.n_traj && a.master_seed == b.master_seed &&
           a.renormalize_each_step == b.renormalize_each_step && a.sample_every == b.sample_every &&
           a.memory_dt == b.memory_dt && a.threads == b.threads && a.thermal_vib == b.thermal_vib &&
           a.block_size == b.block_size;
}
inline bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.system == b.system && a.bath == b.bath && a.bath_given == b.bath_given &&
           a.propagation == b.propagation && a.coupling_kind == b.coupling_kind &&
           a.duration_ps == b.duration_ps && a.lambda_convention == b.lambda_convention &&
           a.recipe == b.recipe && a.out_dir == b.out_dir && a.write_full_rho == b.write_full_rho &&
           a.sweep == b.sweep;
}

namespace detail {

enum class Dim { Energy, Time, Temperature, None, Integer, Text, Flag };

struct KeySpec {
    Dim dim;
};

inline const std::map<std::string, std::map<std::string, KeySpec>>& schema() {
    static const std::map<std::string, std::map<std::string, KeySpec>> s = {
        {"run",
         {{"scheme", {Dim::Text}},
          {"coupling", {Dim::Text}},
          {"seed", {Dim::Integer}},
          {"n_traj", {Dim::Integer}},
          {"threads", {Dim::Integer}},
          {"recipe", {Dim::Text}}}},
        {"system",
         {{"epsilon", {Dim::Energy}},
          {"delta", {Dim::Energy}},
          {"omega_v", {Dim::Energy}},
          {"gamma", {Dim::Energy}},
          {"fock_dim", {Dim::Integer}},
          {"vib_init", {Dim::Text}}}},
        {"bath",
         {{"family", {Dim::Text}},
          {"alpha", {Dim::None}},
          {"omega_c", {Dim::Energy}},
          {"omega_0", {Dim::Energy}},
          {"beta", {Dim::Energy}},
          {"temperature", {Dim::Temperature}},
          {"gamma_E", {Dim::Energy}},
          {"lambda_convention", {Dim::Text}}}},
        {"propagation",
         {{"dt", {Dim::Time}},
          {"duration", {Dim::Time}},
          {"sample_every", {Dim::Integer}},
          {"memory_dt", {Dim::Time}},
          {"renormalize", {Dim::Flag}},
          {"block_size", {Dim::Integer}}}},
        {"output", {{"dir", {Dim::Text}}, {"full_rho", {Dim::Flag}}}},
        {"sweep",
         {{"axis1", {Dim::Text}},
          {"axis1_min", {Dim::Energy}},
          {"axis1_max", {Dim::Energy}},
          {"axis1_points", {Dim::Integer}},
          {"axis1_spacing", {Dim::Text}},
          {"axis2", {Dim::Text}},
          {"axis2_min", {Dim::Energy}},
          {"axis2_max", {Dim::Energy}},
          {"axis2_points", {Dim::Integer}},
          {"axis2_spacing", {Dim::Text}},
          {"budget", {Dim::None}},
          {"order", {Dim::Text}},
          {"tail_fraction", {Dim::None}}}},
    };
    return s;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Splits "0.1487 eV" into number and unit.
inline bool split_quantity(const std::string& text, double& value, std::string& unit) {
    const std::string s = trim(text);
    const char* begin = s.c_str();
    char* end = nullptr;
    value = std::strtod(begin, &end);
    if (end == begin) return false;
    unit = trim(std::string(end));
    return std::isfinite(value);
}

// Converts to internal units (eV, 1/eV); returns an error message or "".
inline std::string convert(Dim d, const std::string& text, double& out) {
    double v = 0.0;
    std::string u;
    if (!split_quantity(text, v, u)) return "not a number: '" + text + "'";
    switch (d) {
    case Dim::Energy:
        if (u == "eV") out = v;
        else if (u == "meV") out = v * 1e-3;
        else return u.empty() ? "missing energy unit (eV or meV)" : "unit '" + u + "' is not an energy unit";
        return "";
    case Dim::Time:
        if (u == "ps") out = units::ps_to_internal(v);
        else if (u == "fs") out = units::fs_to_internal(v);
        else if (u == "/eV") out = v;
        else return u.empty() ? "missing time unit (ps, fs or /eV)" : "unit '" + u + "' is not a time unit";
        return "";
    case Dim::Temperature:
        if (u == "K") out = units::kelvin_to_ev(v);
        else if (u == "eV") out = v;
        else if (u == "meV") out = v * 1e-3;
        else return u.empty() ? "missing temperature unit (K or eV)" : "unit '" + u + "' is not a temperature unit";
        return "";
    case Dim::None:
        if (!u.empty()) return "dimensionless value has unit '" + u + "'";
        out = v;
        return "";
    case Dim::Integer:
        if (!u.empty()) return "integer value has unit '" + u + "'";
        if (v != std::floor(v)) return "not an integer: '" + text + "'";
        out = v;
        return "";
    default:
        return "internal: bad dimension";
    }
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline Scheme parse_scheme(const std::string& s) {
    if (s == "markov") return Scheme::MarkovSSE;
    if (s == "nm_diagonal") return Scheme::NM_Diagonal;
    if (s == "nm_offdiagonal") return Scheme::NM_OffDiagonal;
    if (s == "closed") return Scheme::Closed;
    throw ConfigError("unknown scheme '" + s + "'");
}

// Parses an INI document into a validated RunConfig. Every violation found is
// reported together in one ConfigError.
inline RunConfig parse_and_validate(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream is(text);
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
    }

    std::vector<std::string> errs;
    std::map<std::string, std::map<std::string, std::string>> raw;
    const auto& sch = detail::schema();
    for (const auto& [sec, node] : tree) {
        auto it = sch.find(sec);
        if (it == sch.end()) {
            if (node.empty()) errs.push_back("key '" + sec + "' outside any section");
            else errs.push_back("unknown section [" + sec + "]");
            continue;
        }
        for (const auto& [key, val] : node) {
            if (!it->second.count(key)) {
                errs.push_back("unknown key [" + sec + "] " + key);
                continue;
            }
            raw[sec][key] = detail::trim(val.data());
        }
    }

    RunConfig c;
    auto has = [&](const std::string& s, const std::string& k) { return raw.count(s) && raw[s].count(k); };
    auto num = [&](const std::string& s, const std::string& k, double& dst) {
        if (!has(s, k)) return false;
        double v = 0.0;
        const std::string e = detail::convert(sch.at(s).at(k).dim, raw[s][k], v);
        if (!e.empty()) {
            errs.push_back("[" + s + "] " + k + ": " + e);
            return false;
        }
        dst = v;
        return true;
    };
    auto integer = [&](const std::string& s, const std::string& k, auto& dst) {
        double v = 0.0;
        if (num(s, k, v)) dst = static_cast<std::remove_reference_t<decltype(dst)>>(v);
    };
    auto flag = [&](const std::string& s, const std::string& k, bool& dst) {
        if (!has(s, k)) return;
        const std::string v = raw[s][k];
        if (v == "true" || v == "yes" || v == "1") dst = true;
        else if (v == "false" || v == "no" || v == "0") dst = false;
        else errs.push_back("[" + s + "] " + k + ": expected true or false, got '" + v + "'");
    };
    auto text_of = [&](const std::string& s, const std::string& k) { return has(s, k) ? raw[s][k] : std::string(); };

    // [run]
    if (has("run", "scheme")) {
        try {
            c.propagation.scheme = parse_scheme(raw["run"]["scheme"]);
        } catch (const ConfigError& e) {
            errs.push_back(std::string("[run] scheme: ") + e.what());
        }
    }
    if (has("run", "coupling")) {
        const auto v = raw["run"]["coupling"];
        if (v == "diagonal") c.coupling_kind = CouplingKind::Diagonal;
        else if (v == "offdiagonal") c.coupling_kind = CouplingKind::OffDiagonal;
        else errs.push_back("[run] coupling: expected diagonal or offdiagonal, got '" + v + "'");
    }
    if (has("run", "seed")) {
        const std::string v = raw["run"]["seed"];
        char* end = nullptr;
        const unsigned long long s = std::strtoull(v.c_str(), &end, 10);
        if (v.empty() || *end != '\0' || v[0] == '-') errs.push_back("[run] seed: not an unsigned integer: '" + v + "'");
        else c.propagation.master_seed = s;
    }
    integer("run", "n_traj", c.propagation.n_traj);
    integer("run", "threads", c.propagation.threads);
    c.recipe = text_of("run", "recipe");

    // [system]
    num("system", "epsilon", c.system.epsilon);
    num("system", "delta", c.system.delta);
    num("system", "omega_v", c.system.omega_v);
    num("system", "gamma", c.system.gamma);
    integer("system", "fock_dim", c.system.fock_dim);
    if (has("system", "vib_init")) {
        const auto v = raw["system"]["vib_init"];
        if (v == "ground") c.propagation.thermal_vib = false;
        else if (v == "thermal") c.propagation.thermal_vib = true;
        else errs.push_back("[system] vib_init: expected ground or thermal, got '" + v + "'");
    }

    // [bath]
    c.bath_given = has("bath", "family");
    if (c.bath_given) {
        const auto v = raw["bath"]["family"];
        if (v == "ohmic") c.bath.family = BathFamily::Ohmic;
        else if (v == "structured") c.bath.family = BathFamily::Structured;
        else errs.push_back("[bath] family: expected ohmic or structured, got '" + v + "'");
    }
    num("bath", "alpha", c.bath.alpha);
    num("bath", "omega_c", c.bath.omega_c);
    num("bath", "omega_0", c.bath.omega_0);
    num("bath", "beta", c.bath.beta);
    num("bath", "temperature", c.bath.temperature);
    num("bath", "gamma_E", c.bath.gamma_E);
    if (has("bath", "lambda_convention")) {
        const auto v = raw["bath"]["lambda_convention"];
        if (v == "integral") c.lambda_convention = LambdaConvention::Integral;
        else if (v == "caption") c.lambda_convention = LambdaConvention::Caption;
        else errs.push_back("[bath] lambda_convention: expected integral or caption, got '" + v + "'");
    }

    // [propagation]
    num("propagation", "dt", c.propagation.dt);
    if (has("propagation", "duration")) {
        double v = 0.0, d = 0.0;
        std::string u;
        if (detail::split_quantity(raw["propagation"]["duration"], v, u) && u == "ps") c.duration_ps = v;
        else if (num("propagation", "duration", d)) c.duration_ps = units::internal_to_ps(d);
    }
    integer("propagation", "sample_every", c.propagation.sample_every);
    num("propagation", "memory_dt", c.propagation.memory_dt);
    flag("propagation", "renormalize", c.propagation.renormalize_each_step);
    integer("propagation", "block_size", c.propagation.block_size);

    // [output]
    c.out_dir = text_of("output", "dir");
    flag("output", "full_rho", c.write_full_rho);

    // [sweep]
    for (int ax = 1; ax <= 2; ++ax) {
        const std::string p = "axis" + std::to_string(ax);
        if (!has("sweep", p)) continue;
        SweepAxis a;
        a.name = raw["sweep"][p];
        if (a.name != "epsilon" && a.name != "gamma" && a.name != "delta" && a.name != "omega_v")
            errs.push_back("[sweep] " + p + ": unknown axis '" + a.name + "'");
        if (!num("sweep", p + "_min", a.min)) errs.push_back("[sweep] " + p + "_min missing or invalid");
        if (!num("sweep", p + "_max", a.max)) errs.push_back("[sweep] " + p + "_max missing or invalid");
        integer("sweep", p + "_points", a.n_points);
        const auto sp = text_of("sweep", p + "_spacing");
        if (sp == "log") a.log_spacing = true;
        else if (!sp.empty() && sp != "linear") errs.push_back("[sweep] " + p + "_spacing: expected linear or log");
        if (!(a.min < a.max)) errs.push_back("[sweep] " + p + ": min must be < max");
        if (a.n_points < 2) errs.push_back("[sweep] " + p + "_points must be >= 2");
        if (a.log_spacing && !(a.min > 0.0)) errs.push_back("[sweep] " + p + ": log spacing needs min > 0");
        c.sweep.axes.push_back(a);
    }
    if (has("sweep", "axis2") && !has("sweep", "axis1")) errs.push_back("[sweep] axis2 given without axis1");
    num("sweep", "budget", c.sweep.budget);
    num("sweep", "tail_fraction", c.sweep.tail_fraction);
    if (has("sweep", "order")) {
        const auto v = raw["sweep"]["order"];
        if (v == "natural") c.sweep.order = ExecutionOrder::Natural;
        else if (v == "reverse") c.sweep.order = ExecutionOrder::Reverse;
        else if (v == "shuffled") c.sweep.order = ExecutionOrder::Shuffled;
        else errs.push_back("[sweep] order: expected natural, reverse or shuffled");
    }

    // Domain and cross-field checks.
    try { validate(c.system); } catch (const Error& e) { errs.push_back(std::string("[system] ") + e.what()); }
    try { validate(c.bath); } catch (const Error& e) { errs.push_back(std::string("[bath] ") + e.what()); }
    if (!(c.propagation.dt > 0.0)) errs.push_back("[propagation] dt must be > 0");
    if (!(c.duration_ps > 0.0)) errs.push_back("[propagation] duration must be > 0");
    if (c.propagation.n_traj < 1) errs.push_back("[run] n_traj must be >= 1");
    if (c.propagation.threads < 1) errs.push_back("[run] threads must be >= 1");
    if (c.propagation.sample_every < 1) errs.push_back("[propagation] sample_every must be >= 1");
    if (c.propagation.block_size < 1) errs.push_back("[propagation] block_size must be >= 1");
    if (!(c.propagation.memory_dt > 0.0)) errs.push_back("[propagation] memory_dt must be > 0");
    const Scheme sc = c.propagation.scheme;
    if ((sc == Scheme::NM_Diagonal || sc == Scheme::NM_OffDiagonal) && !c.bath_given)
        errs.push_back("[bath] family is required for non-Markovian schemes");
    if (sc == Scheme::Closed && (c.bath.gamma_E != 0.0 || c.bath.alpha != 0.0))
        errs.push_back("closed scheme requires [bath] gamma_E = 0 and [bath] alpha = 0 (got gamma_E = " +
                       detail::fmt(c.bath.gamma_E) + " eV, alpha = " + detail::fmt(c.bath.alpha) + ")");
    if (sc == Scheme::NM_Diagonal && has("run", "coupling") && c.coupling_kind != CouplingKind::Diagonal)
        errs.push_back("[run] coupling conflicts with scheme nm_diagonal");
    if (sc == Scheme::NM_OffDiagonal && has("run", "coupling") && c.coupling_kind != CouplingKind::OffDiagonal)
        errs.push_back("[run] coupling conflicts with scheme nm_offdiagonal");
    if (sc == Scheme::NM_Diagonal) c.coupling_kind = CouplingKind::Diagonal;
    if (sc == Scheme::NM_OffDiagonal) c.coupling_kind = CouplingKind::OffDiagonal;
    if (c.lambda_convention == LambdaConvention::Caption && c.bath.family != BathFamily::Ohmic)
        errs.push_back("[bath] lambda_convention caption is defined for ohmic baths only");

    if (!errs.empty()) {
        std::string msg;
        for (std::size_t i = 0; i < errs.size(); ++i) msg += (i ? "; " : "") + errs[i];
        throw ConfigError(msg);
    }
    return c;
}

// Canonical text form; parse_and_validate(to_ini(c)) == c.
inline std::string to_ini(const RunConfig& c) {
    using detail::fmt;
    std::ostringstream o;
    const auto& p = c.propagation;
    o << "[run]\n";
    o << "scheme = " << to_string(p.scheme) << "\n";
    o << "coupling = " << to_string(c.coupling_kind) << "\n";
    o << "seed = " << p.master_seed << "\n";
    o << "n_traj = " << p.n_traj << "\n";
    o << "threads = " << p.threads << "\n";
    if (!c.recipe.empty()) o << "recipe = " << c.recipe << "\n";
    o << "\n[system]\n";
    o << "epsilon = " << fmt(c.system.epsilon) << " eV\n";
    o << "delta = " << fmt(c.system.delta) << " eV\n";
    o << "omega_v = " << fmt(c.system.omega_v) << " eV\n";
    o << "gamma = " << fmt(c.system.gamma) << " eV\n";
    o << "fock_dim = " << c.system.fock_dim << "\n";
    o << "vib_init = " << (p.thermal_vib ? "thermal" : "ground") << "\n";
    o << "\n[bath]\n";
    if (c.bath_given) o << "family = " << to_string(c.bath.family) << "\n";
    o << "alpha = " << fmt(c.bath.alpha) << "\n";
    o << "omega_c = " << fmt(c.bath.omega_c) << " eV\n";
    o << "omega_0 = " << fmt(c.bath.omega_0) << " eV\n";
    o << "beta = " << fmt(c.bath.beta) << " eV\n";
    o << "temperature = " << fmt(c.bath.temperature) << " eV\n";
    o << "gamma_E = " << fmt(c.bath.gamma_E) << " eV\n";
    o << "lambda_convention = " << (c.lambda_convention == LambdaConvention::Caption ? "caption" : "integral") << "\n";
    o << "\n[propagation]\n";
    o << "dt = " << fmt(p.dt) << " /eV\n";
    o << "duration = " << fmt(c.duration_ps) << " ps\n";
    o << "sample_every = " << p.sample_every << "\n";
    o << "memory_dt = " << fmt(p.memory_dt) << " /eV\n";
    o << "renormalize = " << (p.renormalize_each_step ? "true" : "false") << "\n";
    o << "block_size = " << p.block_size << "\n";
    o << "\n[output]\n";
    if (!c.out_dir.empty()) o << "dir = " << c.out_dir << "\n";
    o << "full_rho = " << (c.write_full_rho ? "true" : "false") << "\n";
    if (!c.sweep.axes.empty()) {
        o << "\n[sweep]\n";
        for (std::size_t i = 0; i < c.sweep.axes.size(); ++i) {
            const auto& a = c.sweep.axes[i];
            const std::string px = "axis" + std::to_string(i + 1);
            o << px << " = " << a.name << "\n";
            o << px << "_min = " << fmt(a.min) << " eV\n";
            o << px << "_max = " << fmt(a.max) << " eV\n";
            o << px << "_points = " << a.n_points << "\n";
            o << px << "_spacing = " << (a.log_spacing ? "log" : "linear") << "\n";
        }
        o << "budget = " << fmt(c.sweep.budget) << "\n";
        o << "order = "
          << (c.sweep.order == ExecutionOrder::Natural ? "natural"
              : c.sweep.order == ExecutionOrder::Reverse ? "reverse"
                                                          : "shuffled")
          << "\n";
        o << "tail_fraction = " << fmt(c.sweep.tail_fraction) << "\n";
    }
    return o.str();
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Directory holding the shipped figure recipes.
inline std::filesystem::path recipe_dir() {
    if (const char* env = std::getenv("VAET_RECIPE_DIR"); env && *env) return env;
#ifdef VAET_RECIPE_DIR
    return VAET_RECIPE_DIR;
#else
    return "recipes";
#endif
}

inline std::vector<std::string> list_recipes() {
    std::vector<std::string> out;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(recipe_dir(), ec))
        if (e.path().extension() == ".ini") out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::string recipe_text(const std::string& name) {
    for (char ch : name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
            throw ConfigError("invalid recipe name '" + name + "'");
    const auto path = recipe_dir() / (name + ".ini");
    if (!std::filesystem::exists(path)) {
        std::string known;
        for (const auto& r : list_recipes()) known += (known.empty() ? "" : ", ") + r;
        throw ConfigError("unknown recipe '" + name + "' (available: " + known + ")");
    }
    return read_text_file(path.string());
}

} // namespace vaet
