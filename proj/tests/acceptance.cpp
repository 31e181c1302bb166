// Acceptance runner: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "vaet/vaet.hpp"

using namespace vaet;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

std::string num(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

RunConfig recipe(const std::string& name) { return parse_and_validate(recipe_text(name)); }

EnsembleResult simulate(const RunConfig& c) { return run_ensemble(c.resolved_propagation(), c.system, c.bath); }

// Topographic prominence of each interior local maximum of y.
std::vector<std::pair<std::size_t, std::size_t>> peaks_with_valley(const std::vector<double>& y) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1])) continue;
        std::size_t lo = i, hi = i;
        std::size_t l = i;
        while (l > 0 && y[l - 1] <= y[i]) {
            --l;
            if (y[l] < y[lo]) lo = l;
        }
        const bool left_edge = l == 0;
        std::size_t r = i;
        while (r + 1 < y.size() && y[r + 1] <= y[i]) {
            ++r;
            if (y[r] < y[hi]) hi = r;
        }
        const bool right_edge = r + 1 == y.size();
        std::size_t valley;
        if (left_edge && right_edge) valley = y[lo] < y[hi] ? lo : hi;
        else if (left_edge) valley = hi;
        else if (right_edge) valley = lo;
        else valley = y[lo] > y[hi] ? lo : hi;
        out.emplace_back(i, valley);
    }
    return out;
}

Outcome criterion1() {
    const RunConfig c = recipe("fig5b");
    const EnsembleResult e = simulate(c);
    const double m = *std::max_element(e.populations.P_A.begin(), e.populations.P_A.end());
    return {m <= 1e-6, "max P_A = " + num(m) + " (limit 1e-6)"};
}

Outcome criterion2() {
    SystemParams s;
    s.epsilon = 0.0;
    s.delta = 0.01;
    s.gamma = 0.0;
    PropagatorConfig c;
    c.scheme = Scheme::Closed;
    c.dt = 0.05;
    c.n_steps = std::size_t(std::ceil(10.0 * 2.0 * std::numbers::pi / s.delta / c.dt));
    c.sample_every = 50;
    const EnsembleResult e = run_ensemble(c, s, BathSpec{});
    double err = 0.0;
    for (std::size_t i = 0; i < e.t.size(); ++i) {
        const double x = std::sin(0.5 * s.delta * e.t[i]);
        err = std::max(err, std::abs(e.populations.P_A[i] - x * x));
    }
    return {err <= 1e-6, "max |P_A - sin^2(delta t/2)| = " + num(err) + " over 10 periods, N = " +
                             std::to_string(s.fock_dim)};
}

Outcome criterion3() {
    MJParams p;
    p.V = 5e-4;
    p.lambda_s = 0.0125;
    p.omega_v = 0.1487;
    p.temperature = 290.0 * units::kBoltzmannEvPerK;
    double gauss = 0.0;
    for (double eps : {0.0, 0.0125, 0.05, 0.1, 0.2}) {
        p.epsilon = eps;
        const double four = 4.0 * p.lambda_s * p.temperature;
        const double d = eps - p.lambda_s;
        const double ref = 2.0 * std::numbers::pi * p.V * p.V / std::sqrt(std::numbers::pi * four) *
                           std::exp(-d * d / four) / units::kHbarEvPs;
        gauss = std::max(gauss, std::abs(mj_rate(p) - ref) / ref);
    }
    double mass = 0.0, doubling = 0.0;
    for (double S : {0.05, 0.9045, 3.0, 12.0}) {
        MJParams q = p;
        q.lambda_v = S * q.omega_v;
        q.epsilon = 0.147;
        const MJResult a = mj_rate_detail(q);
        mass = std::max(mass, std::abs(a.poisson_mass - 1.0));
        q.m_max = 2 * a.terms;
        const MJResult b = mj_rate_detail(q);
        doubling = std::max(doubling, std::abs(a.k_ps_inv - b.k_ps_inv) / b.k_ps_inv);
    }
    return {gauss <= 1e-10 && mass <= 1e-10 && doubling <= 1e-10,
            "S=0 rel err " + num(gauss) + ", Poisson mass err " + num(mass) + ", doubling rel change " + num(doubling)};
}

Outcome criterion4() {
    const RunConfig c = recipe("fig1a");
    const RateMap map = run_sweep(c);
    write_atomic("acceptance_fig1a_ratemap.csv", ratemap_csv(map));
    const auto& eps = map.axis_values[0];
    std::vector<double> k, se;
    for (const auto& cell : map.cells) {
        k.push_back(cell.k);
        se.push_back(cell.k_stderr);
    }
    const std::size_t top = std::size_t(std::max_element(k.begin(), k.end()) - k.begin());
    int secondary = 0;
    for (const auto& [i, v] : peaks_with_valley(k)) {
        if (i == top) continue;
        if (k[i] - k[v] > 2.0 * (se[i] + se[v])) ++secondary;
    }
    const double lam = reorganization_energy_bath(c.bath, LambdaConvention::Caption) +
                       reorganization_energy_mode(c.system.gamma, c.system.omega_v);
    const double step = eps[1] - eps[0];
    const bool near = std::abs(eps[top] - lam) <= step + 1e-12;
    std::string curve;
    for (std::size_t i = 0; i < k.size(); ++i) curve += (i ? " " : "") + num(k[i]);
    return {secondary == 0 && near, "argmax eps = " + num(eps[top]) + " vs lambda_tot = " + num(lam) + " (step " +
                                        num(step) + "), secondary maxima above noise = " + std::to_string(secondary) +
                                        ", flagged = " + num(map.flagged_fraction()) + ", k = [" + curve + "]"};
}

Outcome criterion5() {
    RunConfig off = recipe("fig2_prose");
    RunConfig diag = off;
    diag.propagation.scheme = Scheme::NM_Diagonal;
    diag.coupling_kind = CouplingKind::Diagonal;
    const EnsembleResult ed = simulate(diag);
    const EnsembleResult eo = simulate(off);
    const double diag_min = *std::min_element(ed.populations.P_D.begin(), ed.populations.P_D.end());
    const double pd_min = *std::min_element(eo.populations.P_D.begin(), eo.populations.P_D.end());
    const double pa_max = *std::max_element(eo.populations.P_A.begin(), eo.populations.P_A.end());
    const bool ok = diag_min >= 0.9 && pd_min >= 0.43 && pd_min <= 0.73 && pa_max >= 0.30 && pa_max <= 0.60;
    return {ok, "diagonal min P_D = " + num(diag_min) + "; off-diagonal min P_D = " + num(pd_min) +
                    ", max P_A = " + num(pa_max) + " (" + std::to_string(eo.n_traj_used) + " trajectories each)"};
}

int prominent_maxima(const EnsembleResult& e, double t_end_ps) {
    std::vector<double> y, se;
    for (std::size_t i = 0; i < e.populations.t.size() && e.populations.t[i] <= t_end_ps + 1e-12; ++i) {
        y.push_back(e.populations.P_A[i]);
        se.push_back(e.pd_stderr[i]);
    }
    int n = 0;
    for (const auto& [i, v] : peaks_with_valley(y))
        if (y[i] - y[v] > std::max(3.0 * std::max(se[i], se[v]), 1e-3)) ++n;
    return n;
}

Outcome criterion6() {
    const int structured = prominent_maxima(simulate(recipe("fig4a")), 1.0);
    const int ohmic = prominent_maxima(simulate(recipe("fig3a")), 1.0);
    return {structured >= 2 && ohmic < 1, "P_A maxima in first ps above noise floor: structured " +
                                              std::to_string(structured) + ", ohmic " + std::to_string(ohmic)};
}

Outcome criterion7() {
    struct Family {
        BathSpec b;
        double dt;
        std::size_t n;
    };
    BathSpec o;
    o.family = BathFamily::Ohmic;
    o.alpha = 0.05;
    o.omega_c = 0.5;
    o.temperature = 290.0 * units::kBoltzmannEvPerK;
    BathSpec s;
    s.family = BathFamily::Structured;
    s.alpha = 0.08;
    s.omega_0 = 0.1;
    s.beta = 0.005;
    s.temperature = 290.0 * units::kBoltzmannEvPerK;
    bool ok = true;
    std::string detail;
    for (const Family& f : {Family{o, 0.1, 256}, Family{s, 0.2, 512}}) {
        const NoiseSelfTest r = noise_selftest(f.b, f.dt, f.n, 2000, 7);
        const int reps = 8;
        std::vector<double> a, b;
        for (int k = 0; k < reps; ++k) {
            a.push_back(noise_selftest(f.b, f.dt, f.n, 500, 100 + std::uint64_t(k)).rms_error);
            b.push_back(noise_selftest(f.b, f.dt, f.n, 2000, 200 + std::uint64_t(k)).rms_error);
        }
        auto mean_se = [](const std::vector<double>& v) {
            double m = 0.0, q = 0.0;
            for (double x : v) m += x;
            m /= double(v.size());
            for (double x : v) q += (x - m) * (x - m);
            return std::pair{m, std::sqrt(q / double(v.size() - 1) / double(v.size()))};
        };
        const auto [ma, sa] = mean_se(a);
        const auto [mb, sb] = mean_se(b);
        const double ratio = ma / mb;
        const double sigma = ratio * std::hypot(sa / ma, sb / mb);
        const bool halves = std::abs(ratio - 2.0) <= 2.0 * sigma;
        ok = ok && r.fraction_within >= 0.99 && halves;
        detail += std::string(detail.empty() ? "" : "; ") + to_string(f.b.family) + " within band " +
                  num(r.fraction_within) + ", rms ratio M=500/2000 " + num(ratio) + " +- " + num(sigma);
    }
    return {ok, detail};
}

Outcome criterion8() {
    const cplx A{0.7, 0.2}, r{1.3, 0.8};
    const double dt = 1e-3;
    const std::size_t n = 4001;
    CorrelationTable tab;
    tab.dt = dt;
    for (std::size_t i = 0; i < n; ++i) tab.values.push_back(A * std::exp(-r * (dt * double(i))));
    const KernelTable k = memory_kernels(tab);
    double e0 = 0.0, e1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = dt * double(i);
        const cplx g0 = A * (1.0 - std::exp(-r * t)) / r;
        const cplx g1 = A * (1.0 - std::exp(-r * t) * (1.0 + r * t)) / (r * r);
        e0 = std::max(e0, std::abs(k.g0[i] - g0));
        e1 = std::max(e1, std::abs(k.g1[i] - g1));
    }
    const bool zero = k.g0[0] == cplx{} && k.g1[0] == cplx{} && k.g2[0] == cplx{};
    double g2 = 0.0;
    for (CouplingKind kind : {CouplingKind::Diagonal, CouplingKind::OffDiagonal}) {
        const OperatorMatrix L = build_coupling_operator(kind, 0.05, 10);
        const OperatorMatrix comm = L.adjoint() * L - L * L.adjoint();
        for (const auto& g : k.g2) g2 = std::max(g2, (g * comm).cwiseAbs().maxCoeff());
    }
    return {e0 <= 1e-7 && e1 <= 1e-7 && zero && g2 <= 1e-14,
            "g0 err " + num(e0) + ", g1 err " + num(e1) + ", zero at t=0 " + (zero ? "yes" : "no") +
                ", max |g2 [L+,L]| " + num(g2)};
}

template <class F>
PopulationTrace sampled(double t_end, std::size_t n, F f) {
    PopulationTrace tr;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t_end * double(i) / double(n - 1);
        tr.t.push_back(t);
        tr.P_D.push_back(f(t));
        tr.P_A.push_back(1.0 - tr.P_D.back());
        tr.coh_re.push_back(0.0);
        tr.coh_im.push_back(0.0);
    }
    return tr;
}

Outcome criterion9() {
    double exact = 0.0;
    for (double a : {0.4, -0.3}) {
        const PopulationTrace tr = sampled(10.0, 400, [a](double t) { return 0.3 + a * std::exp(-0.5 * t); });
        exact = std::max(exact, std::abs(extract_rate(tr, 0.3, 0.0).k_rel - 0.5));
    }
    const double kf = 0.3, kb = 0.1, k = kf + kb, pinf = kb / k;
    const PopulationTrace tr = sampled(100.0, 5000, [&](double t) { return pinf + (1.0 - pinf) * std::exp(-k * t); });
    const StationaryEstimate st = estimate_stationary(tr);
    const double ek = std::abs(extract_rate(tr, st.P_inf, 0.0).k_rel - k);
    const double ep = std::abs(st.P_inf - pinf);
    return {exact <= 1e-10 && ek <= 1e-6 && ep <= 1e-6,
            "noiseless k err " + num(exact) + ", two-state k err " + num(ek) + ", P_inf err " + num(ep)};
}

Outcome criterion10() {
    RunConfig c = recipe("fig3a");
    c.system.fock_dim = 4;
    c.duration_ps = 0.5;
    c.propagation.n_traj = 200;
    c.write_full_rho = false;
    const EnsembleResult e = simulate(c);
    double herm = 0.0, tr = 0.0, margin = 1.0;
    for (std::size_t k = 0; k < e.rho.size(); ++k) {
        herm = std::max(herm, (e.rho[k] - e.rho[k].adjoint()).cwiseAbs().maxCoeff());
        tr = std::max(tr, std::abs(e.rho[k].trace().real() - 1.0));
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(e.rho[k]);
        margin = std::min(margin, es.eigenvalues()(0) + 10.0 * e.pd_stderr[k]);
    }
    SystemParams s;
    s.epsilon = 0.02;
    s.delta = 0.05;
    s.fock_dim = 2;
    BathSpec b;
    b.family = BathFamily::Ohmic;
    b.alpha = 0.0;
    b.temperature = 0.025;
    b.gamma_E = 0.1;
    PropagatorConfig pc;
    pc.scheme = Scheme::MarkovSSE;
    pc.dt = 0.05;
    pc.n_steps = 2000;
    pc.sample_every = 100;
    auto late_se = [&](int n) {
        pc.n_traj = n;
        const EnsembleResult r = run_ensemble(pc, s, b);
        double m = 0.0;
        const std::size_t h = r.pd_stderr.size() / 2;
        for (std::size_t i = h; i < r.pd_stderr.size(); ++i) m += r.pd_stderr[i];
        return m / double(r.pd_stderr.size() - h);
    };
    const double ratio = late_se(1000) / late_se(4000);
    const bool ok = herm <= 1e-10 && tr <= 1e-8 && margin >= 0.0 && std::abs(ratio - 2.0) <= 0.3 * 2.0;
    return {ok, "max anti-Hermitian " + num(herm) + ", trace err " + num(tr) + ", min eigenvalue margin " +
                    num(margin) + ", SE ratio N=1000/4000 " + num(ratio)};
}

Outcome criterion11() {
    RunConfig c = recipe("fig4a");
    c.propagation.n_traj = 24;
    c.duration_ps = 0.3;
    const std::string a = trace_csv(simulate(c).populations);
    const std::string b = trace_csv(simulate(c).populations);
    c.propagation.threads = 4;
    const std::string d = trace_csv(simulate(c).populations);

    RunConfig s = recipe("fig1a");
    s.propagation.n_traj = 16;
    s.duration_ps = 0.5;
    s.sweep.axes[0].n_points = 4;
    const std::string m1 = ratemap_csv(run_sweep(s));
    const std::string m2 = ratemap_csv(run_sweep(s));
    s.propagation.threads = 3;
    const std::string m3 = ratemap_csv(run_sweep(s));
    const bool trace_ok = a == b && a == d;
    const bool map_ok = m1 == m2 && m1 == m3;
    return {trace_ok && map_ok, std::string("trace identical across runs and threads: ") + (trace_ok ? "yes" : "no") +
                                    ", rate map identical: " + (map_ok ? "yes" : "no")};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria = {
    {"closed-system suppression", criterion1},
    {"Rabi oracle", criterion2},
    {"Marcus-Jortner consistency", criterion3},
    {"activationless ridge", criterion4},
    {"sigma_z vs sigma_x dichotomy", criterion5},
    {"structured-bath beats", criterion6},
    {"noise fidelity", criterion7},
    {"kernel oracles", criterion8},
    {"rate-fit oracles", criterion9},
    {"ensemble sanity", criterion10},
    {"determinism", criterion11},
};

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
        else {
            std::cerr << "usage: acceptance [--only N]\n";
            return 2;
        }
    }
    int failed = 0;
    for (std::size_t i = 0; i < kCriteria.size(); ++i) {
        const int id = int(i) + 1;
        if (only && only != id) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = kCriteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << kCriteria[i].first << ": " << o.detail << " ["
                  << num(secs) << " s]" << std::endl;
        if (!o.pass) ++failed;
    }
    return failed ? 1 : 0;
}
