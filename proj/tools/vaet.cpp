// vaet command-line driver: simulate, sweep, mj, kernels, noise-selftest,
// validate-config.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "vaet/vaet.hpp"

namespace fs = std::filesystem;
using namespace vaet;

namespace {

struct CommonOpts {
    std::string config;
    std::string recipe;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> traj;
    std::optional<int> threads;
};

void add_common(CLI::App* sub, CommonOpts& o) {
    sub->add_option("--config", o.config, "INI configuration file");
    sub->add_option("--recipe", o.recipe, "named figure recipe");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--traj", o.traj, "trajectories per ensemble");
    sub->add_option("--threads", o.threads, "worker threads");
}

RunConfig load(const CommonOpts& o) {
    if (!o.config.empty() && !o.recipe.empty()) throw ConfigError("--config and --recipe are mutually exclusive");
    std::string text;
    if (!o.recipe.empty()) text = recipe_text(o.recipe);
    else if (!o.config.empty()) text = read_text_file(o.config);
    RunConfig c = parse_and_validate(text);
    if (!o.recipe.empty() && c.recipe.empty()) c.recipe = o.recipe;
    if (o.seed) c.propagation.master_seed = *o.seed;
    if (o.traj) {
        if (*o.traj < 1) throw ConfigError("--traj must be >= 1");
        c.propagation.n_traj = *o.traj;
    }
    if (o.threads) {
        if (*o.threads < 1) throw ConfigError("--threads must be >= 1");
        c.propagation.threads = *o.threads;
    }
    return c;
}

fs::path out_dir(const CommonOpts& o, const RunConfig& c) {
    if (!o.out.empty()) return o.out;
    if (!c.out_dir.empty()) return c.out_dir;
    if (const char* env = std::getenv("VAET_OUTPUT_DIR"); env && *env) return env;
    return "vaet_out";
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

int cmd_simulate(const CommonOpts& o) {
    const RunConfig c = load(o);
    OutputSet out(out_dir(o, c));
    const std::string text = to_ini(c);
    const PropagatorConfig pc = c.resolved_propagation();
    const EnsembleResult ens = run_ensemble(pc, c.system, c.bath);
    out.write("trace.csv", trace_csv(ens.populations));
    if (c.write_full_rho) {
        std::ostringstream s;
        const int d = c.system.dim();
        s << "t_ps";
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) s << ",re_" << i << '_' << j << ",im_" << i << '_' << j;
        s << '\n';
        for (std::size_t k = 0; k < ens.rho_full.size(); ++k) {
            s << fmt17(ens.populations.t[k]);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    s << ',' << fmt17(ens.rho_full[k](i, j).real()) << ',' << fmt17(ens.rho_full[k](i, j).imag());
            s << '\n';
        }
        out.write("rho_full.csv", s.str());
    }
    nlohmann::json meta = metadata_json("simulate", text, c.propagation.master_seed, c.recipe);
    meta["n_traj_used"] = ens.n_traj_used;
    meta["n_invalid_resampled"] = ens.n_invalid;
    meta["stderr_P_D_final"] = ens.convergence_diag;
    meta["n_steps"] = pc.n_steps;
    double max_pa = 0.0;
    for (double v : ens.populations.P_A) max_pa = std::max(max_pa, v);
    meta["max_P_A"] = max_pa;
    if (c.propagation.scheme != Scheme::Closed) meta["fit"] = fit_json(fit_ensemble(ens, c.sweep.tail_fraction, exact_stationary_population(c)));
    out.write("metadata.json", dump(meta));
    out.commit();
    std::cout << "wrote " << out.path("trace.csv").string() << " (max P_A = " << fmt17(max_pa) << ")\n";
    return 0;
}

int cmd_sweep(const CommonOpts& o, bool resume, bool traces) {
    const RunConfig c = load(o);
    if (c.sweep.axes.empty()) throw ConfigError("[sweep] axis1 is required for the sweep command");
    OutputSet out(out_dir(o, c));
    const std::string text = to_ini(c);
    SweepOptions so;
    so.checkpoint = out.path("checkpoint.jsonl").string();
    if (!resume) fs::remove(so.checkpoint);
    if (traces) {
        so.trace_dir = (out.path("traces")).string();
        fs::create_directories(so.trace_dir);
    }
    so.progress = [](const CellResult& r, std::size_t done, std::size_t total) {
        std::cerr << "point " << done << "/" << total << " k=" << fmt17(r.k) << " " << flags_joined(r.flags) << "\n";
    };
    const RateMap map = run_sweep(c, so);
    out.write("ratemap.csv", ratemap_csv(map));
    nlohmann::json meta = metadata_json("sweep", text, c.propagation.master_seed, c.recipe);
    meta["flagged_fraction"] = map.flagged_fraction();
    meta["points"] = map.cells.size();
    if (map.axis_names.size() == 1 && map.axis_names[0] == "epsilon" && c.bath.alpha > 0.0) {
        MJParams p = mj_params_from(c);
        const MJCurve mj = mj_curve(p, map.axis_values[0]);
        const MJComparison cmp = compare_to_mj(map, mj);
        out.write("mj_compare.csv", comparison_csv(cmp));
        meta["mj_compare"] = {{"argmax_sim", cmp.argmax_sim}, {"argmax_mj", cmp.argmax_mj},
                              {"peaks_agree", cmp.peaks_agree}, {"mean_ratio", cmp.mean_ratio},
                              {"median_ratio", cmp.median_ratio}, {"note", cmp.note}};
    }
    if (c.bath.alpha > 0.0 && c.bath.family == BathFamily::Ohmic) {
        std::vector<double> gg;
        for (std::size_t a = 0; a < map.axis_names.size(); ++a)
            if (map.axis_names[a] == "gamma") gg = map.axis_values[a];
        if (!gg.empty()) {
            std::ostringstream s;
            s << "gamma,epsilon_star\n";
            for (const auto& pt : activationless_curve(gg, reorganization_energy_bath(c.bath, c.lambda_convention),
                                                       c.system.omega_v))
                s << fmt17(pt.gamma) << ',' << fmt17(pt.epsilon) << '\n';
            out.write("activationless.csv", s.str());
        }
    }
    out.write("metadata.json", dump(meta));
    out.commit();
    std::cout << "wrote " << out.path("ratemap.csv").string() << " (" << map.cells.size() << " points, flagged "
              << fmt17(map.flagged_fraction()) << ")\n";
    return 0;
}

std::vector<double> parse_grid(const std::string& g) {
    double a = 0, b = 0;
    int n = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(g);
    if (!(is >> a >> c1 >> b >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1 || !(a <= b))
        throw ConfigError("--epsilon-grid expects MIN:MAX:N with MIN <= MAX, got '" + g + "'");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[std::size_t(i)] = n == 1 ? a : a + (b - a) * double(i) / double(n - 1);
    return v;
}

int cmd_mj(const CommonOpts& o, const std::string& grid, bool literature) {
    const RunConfig c = load(o);
    OutputSet out(out_dir(o, c));
    MJParams p = mj_params_from(c);
    p.literature_variant = literature;
    const auto eps = grid.empty() ? std::vector<double>{c.system.epsilon} : parse_grid(grid);
    const MJCurve cur = mj_curve(p, eps);
    std::ostringstream s;
    s << "epsilon,k_ps_inv\n";
    for (std::size_t i = 0; i < eps.size(); ++i) s << fmt17(cur.epsilon[i]) << ',' << fmt17(cur.k_ps_inv[i]) << '\n';
    out.write("mj.csv", s.str());
    const double S = p.lambda_v / p.omega_v;
    nlohmann::json meta = metadata_json("mj", to_ini(c), c.propagation.master_seed, c.recipe);
    meta["S"] = S;
    meta["lambda_s"] = p.lambda_s;
    meta["lambda_v"] = p.lambda_v;
    meta["lambda_tot"] = p.lambda_s + p.lambda_v;
    meta["variant"] = literature ? "literature" : "printed";
    meta["argmax_epsilon"] = cur.epsilon[cur.argmax];
    out.write("metadata.json", dump(meta));
    out.commit();
    std::cout << "S=" << fmt17(S) << " lambda_s=" << fmt17(p.lambda_s) << " lambda_v=" << fmt17(p.lambda_v)
              << " lambda_tot=" << fmt17(p.lambda_s + p.lambda_v) << "\n";
    return 0;
}

int cmd_kernels(const CommonOpts& o) {
    const RunConfig c = load(o);
    if (!c.bath_given) throw ConfigError("[bath] family is required for the kernels command");
    OutputSet out(out_dir(o, c));
    const double h = c.propagation.memory_dt;
    const std::size_t n = std::size_t(std::round(units::ps_to_internal(c.duration_ps) / h)) + 1;
    const CorrelationTable tab = correlation_function(c.bath, h, n);
    const KernelTable k = memory_kernels(tab);
    out.write("kernels.csv", kernels_csv(tab, k));
    nlohmann::json meta = metadata_json("kernels", to_ini(c), c.propagation.master_seed, c.recipe);
    meta["omega_max"] = tab.omega_max;
    meta["tail_bound"] = tab.tail_bound;
    meta["quadrature_error_estimate"] = tab.est_error;
    meta["lambda_bath_integral"] = reorganization_energy_bath(c.bath);
    out.write("metadata.json", dump(meta));
    out.commit();
    std::cout << "wrote " << out.path("kernels.csv").string() << " (" << n << " rows)\n";
    return 0;
}

int cmd_noise(const CommonOpts& o, int paths, std::size_t points, double dt) {
    const RunConfig c = load(o);
    if (!c.bath_given) throw ConfigError("[bath] family is required for the noise-selftest command");
    if (paths < 2) throw ConfigError("--paths must be >= 2");
    OutputSet out(out_dir(o, c));
    if (!(dt > 0.0)) dt = c.bath.family == BathFamily::Structured ? 0.2 : 0.1;
    const NoiseSelfTest r = noise_selftest(c.bath, dt, points, paths, c.propagation.master_seed);
    std::ostringstream s;
    s << "t,ReC,ImC,ReEmp,ImEmp,band\n";
    for (std::size_t i = 0; i < r.t.size(); ++i)
        s << fmt17(r.t[i]) << ',' << fmt17(r.target[i].real()) << ',' << fmt17(r.target[i].imag()) << ','
          << fmt17(r.empirical[i].real()) << ',' << fmt17(r.empirical[i].imag()) << ',' << fmt17(r.band) << '\n';
    out.write("noise_selftest.csv", s.str());
    nlohmann::json meta = metadata_json("noise-selftest", to_ini(c), c.propagation.master_seed, c.recipe);
    meta["paths"] = paths;
    meta["fraction_within_band"] = r.fraction_within;
    meta["rms_error"] = r.rms_error;
    meta["pass"] = r.pass;
    out.write("metadata.json", dump(meta));
    out.commit();
    std::cout << (r.pass ? "PASS" : "FAIL") << " noise-selftest paths=" << paths
              << " within_band=" << fmt17(r.fraction_within) << " rms_error=" << fmt17(r.rms_error) << "\n";
    return r.pass ? 0 : 3;
}

int cmd_validate(const CommonOpts& o) {
    const RunConfig c = load(o);
    std::cout << to_ini(c);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic simulator for vibrationally assisted electron transfer"};
    app.require_subcommand(1);
    CommonOpts o;

    auto* sim = app.add_subcommand("simulate", "run one ensemble and write the population trace");
    add_common(sim, o);

    bool resume = false, traces = false;
    auto* sw = app.add_subcommand("sweep", "scan parameters and write a rate map");
    add_common(sw, o);
    sw->add_flag("--resume", resume, "continue from checkpoint.jsonl in the output directory");
    sw->add_flag("--traces", traces, "write per-point trace files");

    std::string grid;
    bool literature = false;
    auto* mj = app.add_subcommand("mj", "Marcus-Jortner rate curve");
    add_common(mj, o);
    mj->add_option("--epsilon-grid", grid, "MIN:MAX:N in eV");
    mj->add_flag("--literature-variant", literature, "use the (eps - lambda_s - m w)^2 exponent");

    auto* ker = app.add_subcommand("kernels", "dump C(t) and the memory kernels");
    add_common(ker, o);

    int paths = 2000;
    std::size_t points = 256;
    double ndt = 0.0;
    auto* nst = app.add_subcommand("noise-selftest", "compare sampled noise covariance with C(t)");
    add_common(nst, o);
    nst->add_option("--paths", paths, "number of noise paths");
    nst->add_option("--points", points, "grid points");
    nst->add_option("--dt", ndt, "grid spacing in 1/eV");

    auto* val = app.add_subcommand("validate-config", "parse, validate and echo the canonical config");
    add_common(val, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*sw) return cmd_sweep(o, resume, traces);
        if (*mj) return cmd_mj(o, grid, literature);
        if (*ker) return cmd_kernels(o);
        if (*nst) return cmd_noise(o, paths, points, ndt);
        if (*val) return cmd_validate(o);
    } catch (const Error& e) {
        std::string msg = e.what();
        for (auto& ch : msg)
            if (ch == '\n') ch = ' ';
        std::cerr << "error: " << e.kind() << ": " << msg << "\n";
        return e.kind() == "config" ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
