// sweep.hpp: parameter scans over the simulate -> fit pipeline, rate maps,
// the activationless curve and comparison with Marcus-Jortner.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vaet/config.hpp"
#include "vaet/io.hpp"
#include "vaet/observables.hpp"
#include "vaet/propagator.hpp"
#include "vaet/ratetheory.hpp"

namespace vaet {

// Late-time rate fit of an ensemble with every quality flag attached.
// A Hermitian Markov coupling leaves the identity stationary, so P_D(inf) = 1/2.
inline std::optional<double> exact_stationary_population(const RunConfig& c) {
    if (c.propagation.scheme == Scheme::MarkovSSE && c.bath.gamma_E > 0.0 && c.system.delta > 0.0) return 0.5;
    return std::nullopt;
}

inline RateFit fit_ensemble(const EnsembleResult& ens, double tail_fraction = 0.2,
                            std::optional<double> exact_p_inf = std::nullopt) {
    const auto& pop = ens.populations;
    RateFit out;
    StationaryEstimate st;
    if (exact_p_inf) {
        st.P_inf = *exact_p_inf;
    } else {
        try {
            st = estimate_stationary(pop, tail_fraction);
        } catch (const DataError&) {
            add_flag(out.flags, flags::kFitFailed);
            return out;
        }
    }
    const double p_inf = std::clamp(st.P_inf, 0.0, 1.0);
    const WindowChoice w = choose_fit_window(pop, p_inf);
    try {
        out = extract_rate(pop, p_inf, w.t0);
    } catch (const FitError&) {
        out = RateFit{};
        out.P_inf = p_inf;
        add_flag(out.flags, flags::kFitFailed);
    }
    if (st.non_stationary) add_flag(out.flags, flags::kNonStationary);
    if (w.fallback) add_flag(out.flags, flags::kNoExpWindow);
    // The decay must be resolved above the ensemble noise at the window start.
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop.t[i] < w.t0) continue;
        if (std::abs(pop.P_D[i] - p_inf) < 5.0 * ens.pd_stderr[i]) add_flag(out.flags, flags::kUnresolved);
        break;
    }
    return out;
}

inline void apply_axis(RunConfig& c, const std::string& name, double v) {
    if (name == "epsilon") c.system.epsilon = v;
    else if (name == "gamma") c.system.gamma = v;
    else if (name == "delta") c.system.delta = v;
    else if (name == "omega_v") c.system.omega_v = v;
    else throw ConfigError("unknown sweep axis '" + name + "'");
}

struct CellResult {
    std::size_t index{0};
    std::vector<double> coords;
    std::uint64_t seed{0};
    double k{0.0};
    double k_stderr{0.0};
    double r2{0.0};
    double P_inf{0.0};
    double stderr_pd{0.0};
    double t0{0.0};
    std::vector<std::string> flags;
    bool failed{false};

    bool clean() const { return flags.empty() && !failed; }
};

struct RateMap {
    std::vector<std::string> axis_names;
    std::vector<std::vector<double>> axis_values;
    std::vector<CellResult> cells; // row-major, axis1 slowest

    std::size_t n1() const { return axis_values.empty() ? 0 : axis_values[0].size(); }
    std::size_t n2() const { return axis_values.size() > 1 ? axis_values[1].size() : 1; }
    double flagged_fraction() const {
        if (cells.empty()) return 0.0;
        std::size_t f = 0;
        for (const auto& c : cells) f += c.clean() ? 0 : 1;
        return double(f) / double(cells.size());
    }
};

inline std::string flags_joined(const std::vector<std::string>& f) {
    std::string s;
    for (const auto& x : f) s += (s.empty() ? "" : "|") + x;
    return s;
}

inline std::string ratemap_csv(const RateMap& m) {
    std::ostringstream o;
    o << "axis1,axis2,k_ps_inv,r2,P_inf,stderr,flags\n";
    for (const auto& c : m.cells) {
        o << fmt17(c.coords[0]) << ',' << (c.coords.size() > 1 ? fmt17(c.coords[1]) : std::string()) << ','
          << fmt17(c.k) << ',' << fmt17(c.r2) << ',' << fmt17(c.P_inf) << ',' << fmt17(c.stderr_pd) << ','
          << flags_joined(c.flags) << '\n';
    }
    return o.str();
}

struct SweepOptions {
    std::string checkpoint;                    // JSONL path, empty = none
    std::string trace_dir;                     // per-point trace CSVs, empty = none
    std::function<void(const CellResult&, std::size_t done, std::size_t total)> progress;
    std::size_t stop_after{0};                 // testing hook: stop after this many new points
};

namespace detail {

inline nlohmann::json cell_json(const CellResult& c) {
    return {{"index", c.index}, {"seed", c.seed},   {"coords", c.coords}, {"k", c.k}, {"k_stderr", c.k_stderr},
            {"r2", c.r2},       {"P_inf", c.P_inf}, {"stderr", c.stderr_pd}, {"t0", c.t0},
            {"flags", c.flags}, {"failed", c.failed}};
}

inline CellResult cell_from_json(const nlohmann::json& j) {
    CellResult c;
    c.index = j.at("index").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.coords = j.at("coords").get<std::vector<double>>();
    c.k = j.at("k").get<double>();
    c.k_stderr = j.value("k_stderr", 0.0);
    c.r2 = j.at("r2").get<double>();
    c.P_inf = j.at("P_inf").get<double>();
    c.stderr_pd = j.at("stderr").get<double>();
    c.t0 = j.at("t0").get<double>();
    c.flags = j.at("flags").get<std::vector<std::string>>();
    c.failed = j.at("failed").get<bool>();
    return c;
}

} // namespace detail

inline std::uint64_t point_seed(std::uint64_t master, std::size_t index) {
    return mix_seed(master ^ 0x5eedf00dULL, index);
}

// Simulates and fits one grid point with its own derived seed.
inline CellResult run_point(const RunConfig& base, const std::vector<std::string>& names,
                            const std::vector<double>& coords, std::size_t index, const std::string& trace_path = {}) {
    CellResult c;
    c.index = index;
    c.coords = coords;
    c.seed = point_seed(base.propagation.master_seed, index);
    RunConfig cfg = base;
    for (std::size_t a = 0; a < names.size(); ++a) apply_axis(cfg, names[a], coords[a]);
    PropagatorConfig pc = cfg.resolved_propagation();
    pc.master_seed = c.seed;
    try {
        const EnsembleResult ens = run_ensemble(pc, cfg.system, cfg.bath);
        const RateFit f = fit_ensemble(ens, base.sweep.tail_fraction, exact_stationary_population(cfg));
        c.k = f.k_rel;
        c.k_stderr = f.k_stderr;
        c.r2 = f.r_squared;
        c.P_inf = f.P_inf;
        c.t0 = f.t0;
        c.flags = f.flags;
        c.stderr_pd = ens.convergence_diag;
        if (!trace_path.empty()) write_atomic(trace_path, trace_csv(ens.populations));
    } catch (const Error& e) {
        c.failed = true;
        c.flags = {flags::kFitFailed, std::string("error:") + e.kind()};
    }
    return c;
}

inline RateMap run_sweep(const RunConfig& base, const SweepOptions& opt = {}) {
    const auto& axes = base.sweep.axes;
    if (axes.empty() || axes.size() > 2) throw ConfigError("sweep needs one or two axes");
    RateMap map;
    for (const auto& a : axes) {
        if (!(a.min < a.max) || a.n_points < 2) throw ConfigError("sweep axis '" + a.name + "' is invalid");
        map.axis_names.push_back(a.name);
        map.axis_values.push_back(a.values());
    }
    const std::size_t n1 = map.n1(), n2 = map.n2(), total = n1 * n2;
    const double traj = double(base.propagation.n_traj) * double(total);
    if (traj > base.sweep.budget)
        throw ConfigError("sweep needs " + fmt17(traj) + " trajectories, budget is " + fmt17(base.sweep.budget));

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    if (base.sweep.order == ExecutionOrder::Reverse) std::reverse(order.begin(), order.end());
    if (base.sweep.order == ExecutionOrder::Shuffled) {
        std::mt19937_64 rng(mix_seed(base.propagation.master_seed, 0xabcdefULL));
        std::shuffle(order.begin(), order.end(), rng);
    }

    std::map<std::size_t, CellResult> have;
    const std::string cfg_text = to_ini(base);
    if (!opt.checkpoint.empty() && std::filesystem::exists(opt.checkpoint)) {
        std::ifstream in(opt.checkpoint);
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                break; // truncated final record from an interrupted run
            }
            if (header) {
                if (!j.contains("config") || j["config"].get<std::string>() != cfg_text)
                    throw DataError("checkpoint '" + opt.checkpoint + "' belongs to a different configuration");
                header = false;
                continue;
            }
            CellResult c = detail::cell_from_json(j);
            if (c.index >= total || c.seed != point_seed(base.propagation.master_seed, c.index))
                throw DataError("checkpoint record " + std::to_string(c.index) + " does not match this sweep");
            have[c.index] = c;
        }
    }
    std::ofstream ck;
    if (!opt.checkpoint.empty()) {
        const bool fresh = !std::filesystem::exists(opt.checkpoint) || have.empty();
        ck.open(opt.checkpoint, fresh ? std::ios::trunc : std::ios::app);
        if (!ck) throw DataError("cannot open checkpoint '" + opt.checkpoint + "'");
        if (fresh) ck << nlohmann::json{{"config", cfg_text}}.dump() << '\n' << std::flush;
    }

    std::size_t fresh_done = 0, done = have.size(), failures = 0;
    for (const auto& [i, c] : have) failures += c.failed ? 1 : 0;
    for (std::size_t idx : order) {
        if (have.count(idx)) continue;
        if (opt.stop_after && fresh_done >= opt.stop_after) break;
        std::vector<double> coords{map.axis_values[0][idx / n2]};
        if (axes.size() > 1) coords.push_back(map.axis_values[1][idx % n2]);
        std::string tp;
        if (!opt.trace_dir.empty()) tp = (std::filesystem::path(opt.trace_dir) / ("point_" + std::to_string(idx) + ".csv")).string();
        CellResult c = run_point(base, map.axis_names, coords, idx, tp);
        if (ck.is_open()) ck << detail::cell_json(c).dump() << '\n' << std::flush;
        failures += c.failed ? 1 : 0;
        have[idx] = c;
        ++fresh_done;
        ++done;
        if (opt.progress) opt.progress(c, done, total);
        if (double(failures) > 0.1 * double(total))
            throw NumericalError("sweep aborted: " + std::to_string(failures) + " of " + std::to_string(total) +
                                 " points failed");
    }
    for (std::size_t i = 0; i < total; ++i)
        if (have.count(i)) map.cells.push_back(have[i]);
    return map;
}

struct ActivationlessPoint {
    double gamma, epsilon;
};

inline std::vector<ActivationlessPoint> activationless_curve(const std::vector<double>& gamma_grid, double lambda_bath,
                                                             double omega_v) {
    std::vector<ActivationlessPoint> out;
    for (double g : gamma_grid) out.push_back({g, total_reorganization_energy(lambda_bath, g, omega_v)});
    return out;
}

struct MJComparison {
    std::vector<double> epsilon, k_sim, k_mj, ratio;
    std::size_t argmax_sim{0}, argmax_mj{0};
    bool peaks_agree{false};     // within one grid step
    double mean_ratio{0.0}, median_ratio{0.0};
    std::string note{"simulation expected to run slightly above Marcus-Jortner"};
};

inline MJComparison compare_to_mj(const RateMap& map, const MJCurve& mj) {
    if (map.axis_names.size() != 1 || map.axis_names[0] != "epsilon")
        throw AlignmentError("compare_to_mj: rate map must be a 1D epsilon scan");
    const auto& eg = map.axis_values[0];
    if (eg.size() != mj.epsilon.size() || map.cells.size() != eg.size())
        throw AlignmentError("compare_to_mj: grid sizes differ");
    for (std::size_t i = 0; i < eg.size(); ++i)
        if (std::abs(eg[i] - mj.epsilon[i]) > 1e-12 * std::max(1.0, std::abs(eg[i])))
            throw AlignmentError("compare_to_mj: epsilon grids differ at index " + std::to_string(i));
    MJComparison r;
    r.epsilon = eg;
    r.k_mj = mj.k_ps_inv;
    std::vector<double> finite_ratios;
    for (std::size_t i = 0; i < eg.size(); ++i) {
        r.k_sim.push_back(map.cells[i].k);
        const double q = mj.k_ps_inv[i] > 0.0 ? map.cells[i].k / mj.k_ps_inv[i] : std::nan("");
        r.ratio.push_back(q);
        if (std::isfinite(q)) finite_ratios.push_back(q);
        if (map.cells[i].k > r.k_sim[r.argmax_sim]) r.argmax_sim = i;
    }
    r.argmax_mj = mj.argmax;
    r.peaks_agree = (r.argmax_sim > r.argmax_mj ? r.argmax_sim - r.argmax_mj : r.argmax_mj - r.argmax_sim) <= 1;
    if (!finite_ratios.empty()) {
        r.mean_ratio = std::accumulate(finite_ratios.begin(), finite_ratios.end(), 0.0) / double(finite_ratios.size());
        std::sort(finite_ratios.begin(), finite_ratios.end());
        r.median_ratio = finite_ratios[finite_ratios.size() / 2];
    }
    return r;
}

inline std::string comparison_csv(const MJComparison& c) {
    std::ostringstream o;
    o << "epsilon,k_sim_ps_inv,k_mj_ps_inv,ratio\n";
    for (std::size_t i = 0; i < c.epsilon.size(); ++i)
        o << fmt17(c.epsilon[i]) << ',' << fmt17(c.k_sim[i]) << ',' << fmt17(c.k_mj[i]) << ',' << fmt17(c.ratio[i])
          << '\n';
    return o.str();
}

// Marcus-Jortner parameters sharing the bath/mode reorganization energies used
// by the simulation.
inline MJParams mj_params_from(const RunConfig& c) {
    MJParams p;
    p.V = 0.5 * c.system.delta;
    p.epsilon = c.system.epsilon;
    p.lambda_s = reorganization_energy_bath(c.bath, c.lambda_convention);
    p.lambda_v = reorganization_energy_mode(c.system.gamma, c.system.omega_v);
    p.omega_v = c.system.omega_v;
    p.temperature = c.bath.temperature;
    return p;
}

} // namespace vaet
