// propagator.hpp: single-trajectory integrators for the Markov, non-Markovian
// diagonal/off-diagonal and closed equations, and ensemble averaging.

#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "vaet/bath.hpp"
#include "vaet/common.hpp"
#include "vaet/hilbert.hpp"
#include "vaet/noise.hpp"
#include "vaet/observables.hpp"

namespace vaet {

enum class Scheme { MarkovSSE, NM_Diagonal, NM_OffDiagonal, Closed };

inline const char* to_string(Scheme s) {
    switch (s) {
    case Scheme::MarkovSSE: return "markov";
    case Scheme::NM_Diagonal: return "nm_diagonal";
    case Scheme::NM_OffDiagonal: return "nm_offdiagonal";
    case Scheme::Closed: return "closed";
    }
    return "?";
}

inline bool uses_rk4(Scheme s) { return s != Scheme::MarkovSSE; }

struct PropagatorConfig {
    Scheme scheme{Scheme::Closed};
    CouplingKind coupling{CouplingKind::Diagonal}; // Markov only; NM schemes fix it
    double dt{0.05};
    std::size_t n_steps{1000};
    int n_traj{1};
    std::uint64_t master_seed{1};
    bool renormalize_each_step{true};
    std::size_t sample_every{1};
    double memory_dt{0.5};     // node spacing of the shifted-noise memory integral
    int threads{1};
    bool keep_full_rho{false};
    bool thermal_vib{false};
    std::size_t block_size{16};
    double stability_limit{0.1};
    double max_invalid_fraction{0.01};
    int max_resample{8};

    CouplingKind effective_coupling() const {
        if (scheme == Scheme::NM_Diagonal) return CouplingKind::Diagonal;
        if (scheme == Scheme::NM_OffDiagonal) return CouplingKind::OffDiagonal;
        return coupling;
    }
    int effective_traj() const { return scheme == Scheme::Closed ? 1 : n_traj; }
    std::size_t n_samples() const { return n_steps / sample_every + 1; }
};

inline double spectral_norm_hermitian(const OperatorMatrix& h) {
    Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Everything a trajectory needs that does not depend on the seed.
struct PropagationModel {
    SystemParams sys;
    BathSpec bath;
    PropagatorConfig cfg;
    OperatorMatrix H, P, X, Y, Z, ZXv;
    std::vector<double> sqrt_n;        // sqrt(k), k = 0..N
    OperatorMatrix U;                  // exp(-i H dt), Markov scheme
    CorrelationTable corr;             // memory grid
    KernelTable kernels;               // memory grid
    std::vector<cplx> g0h, g1h;        // kernels on the half-step grid
    NoiseSynthesizer synth;            // half-step grid
    ShiftAccumulator shift_proto;
    std::size_t mem_stride{1};
    double h_norm{0.0};
};

inline void validate(const PropagatorConfig& c) {
    if (!(c.dt > 0.0)) throw ConfigError("dt must be > 0");
    if (c.n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (c.n_traj < 1) throw ConfigError("n_traj must be >= 1");
    if (c.sample_every < 1) throw ConfigError("sample_every must be >= 1");
    if (c.block_size < 1) throw ConfigError("block_size must be >= 1");
    if (!(c.memory_dt > 0.0)) throw ConfigError("memory_dt must be > 0");
}

inline PropagationModel build_model(const PropagatorConfig& cfg, const SystemParams& sys, const BathSpec& bath) {
    validate(cfg);
    validate(bath);
    PropagationModel m;
    m.sys = sys;
    m.bath = bath;
    m.cfg = cfg;
    m.H = build_system_hamiltonian(sys);
    const int n = sys.fock_dim;
    m.P = coupling_pauli(cfg.effective_coupling(), n);
    m.X = lift_electronic(pauli::x(), n);
    m.Y = lift_electronic(pauli::y(), n);
    m.Z = lift_electronic(pauli::z(), n);
    m.ZXv = Eigen::kroneckerProduct(OperatorMatrix(pauli::z()), position(n)).eval();
    m.h_norm = spectral_norm_hermitian(m.H);
    for (int k = 0; k <= n; ++k) m.sqrt_n.push_back(std::sqrt(double(k)));

    if (uses_rk4(cfg.scheme) && cfg.dt * m.h_norm > cfg.stability_limit)
        throw ConfigError("dt*|H| = " + std::to_string(cfg.dt * m.h_norm) + " exceeds stability limit " +
                          std::to_string(cfg.stability_limit) + "; reduce dt below " +
                          std::to_string(cfg.stability_limit / m.h_norm));

    if (cfg.scheme == Scheme::MarkovSSE) {
        Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(m.H);
        const Eigen::VectorXcd ph =
            (es.eigenvalues().cast<cplx>() * cplx{0.0, -cfg.dt}).array().exp().matrix();
        m.U = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    }

    if (cfg.scheme == Scheme::NM_Diagonal || cfg.scheme == Scheme::NM_OffDiagonal) {
        m.mem_stride = std::max<std::size_t>(1, std::size_t(std::llround(cfg.memory_dt / cfg.dt)));
        const double h = cfg.dt * double(m.mem_stride);
        const std::size_t n_mem = cfg.n_steps / m.mem_stride + 3;
        m.corr = correlation_function(bath, h, n_mem);
        m.kernels = memory_kernels(m.corr);
        const std::size_t n_half = 2 * cfg.n_steps + 1;
        m.g0h.resize(n_half);
        m.g1h.resize(n_half);
        for (std::size_t i = 0; i < n_half; ++i) {
            const double t = 0.5 * cfg.dt * double(i);
            m.g0h[i] = interpolate(m.kernels.g0, h, t);
            m.g1h[i] = interpolate(m.kernels.g1, h, t);
        }
        m.synth = make_synthesizer(bath, 0.5 * cfg.dt, n_half);
        m.shift_proto = ShiftAccumulator(m.corr, m.kernels);
    }
    return m;
}

// Replace the bath correlation by an injected table (test hook for synthetic
// correlation functions). The table must be on the memory grid.
inline void inject_correlation(PropagationModel& m, const CorrelationTable& corr,
                               std::function<double(double)> spectrum, double omega_max) {
    m.corr = corr;
    m.kernels = memory_kernels(corr);
    const double h = corr.dt;
    const std::size_t n_half = 2 * m.cfg.n_steps + 1;
    for (std::size_t i = 0; i < n_half; ++i) {
        const double t = 0.5 * m.cfg.dt * double(i);
        m.g0h[i] = interpolate(m.kernels.g0, h, t);
        m.g1h[i] = interpolate(m.kernels.g1, h, t);
    }
    m.synth = NoiseSynthesizer(std::move(spectrum), omega_max, 0.5 * m.cfg.dt, n_half);
    m.shift_proto = ShiftAccumulator(m.corr, m.kernels);
}

inline double expect(const StateVector& psi, const OperatorMatrix& a) {
    return (psi.dot(a * psi)).real() / psi.squaredNorm();
}

// Literal Euler-Maruyama step of the Markov equation for a Hermitian L
// (L already carries gamma_E); renormalized.
inline StateVector step_markovian(const StateVector& psi, const OperatorMatrix& H, const OperatorMatrix& L,
                                  double dW, double dt) {
    const StateVector lpsi = L * psi;
    const double el = psi.dot(lpsi).real() / psi.squaredNorm();
    const StateVector drift = -kI * (H * psi) - 0.5 * (L * lpsi - 2.0 * el * lpsi + el * el * psi);
    StateVector out = psi + drift * dt + (lpsi - el * psi) * dW;
    return out / out.norm();
}

// Exponential split step used by the ensemble driver: exact unitary part, then
// the noise factor exp(x P) = cosh x + sinh x P for an involutory P, with
// x = gamma_E (dW + 2 gamma_E <P> dt); renormalized. Reproduces the Markov
// equation to first order in dt for P^2 = 1.
inline void step_markovian_split(StateVector& psi, const OperatorMatrix& U, const OperatorMatrix& P,
                                 double gamma_E, double dW, double dt) {
    psi = U * psi;
    if (gamma_E == 0.0) return;
    const StateVector ppsi = P * psi;
    const double ep = psi.dot(ppsi).real() / psi.squaredNorm();
    const double x = gamma_E * (dW + 2.0 * gamma_E * ep * dt);
    psi = std::cosh(x) * psi + std::sinh(x) * ppsi;
    psi /= psi.norm();
}

// Scratch vectors for the right-hand sides and RK4 stages.
struct RhsWork {
    StateVector a, b, c, k1, k2, k3, k4, tmp;
    explicit RhsWork(Eigen::Index n = 0)
        : a(n), b(n), c(n), k1(n), k2(n), k3(n), k4(n), tmp(n) {}
};

// H psi and (sigma_z x) psi using the tensor structure directly; donor block
// occupies indices [0, N), acceptor [N, 2N).
inline void apply_h_zx(const PropagationModel& m, const StateVector& psi, StateVector& hpsi, StateVector& zx) {
    const Eigen::Index n = m.sys.fock_dim;
    const auto& sq = m.sqrt_n;
    const double he = 0.5 * m.sys.epsilon, hd = 0.5 * m.sys.delta, w = m.sys.omega_v, g = m.sys.gamma;
    for (int e = 0; e < 2; ++e) {
        const Eigen::Index o = e * n, p = (1 - e) * n;
        const double sz = e == 0 ? 1.0 : -1.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            cplx x{};
            if (k > 0) x += sq[k] * psi[o + k - 1];
            if (k + 1 < n) x += sq[k + 1] * psi[o + k + 1];
            zx[o + k] = sz * x;
            hpsi[o + k] = (sz * he + w * (double(k) + 0.5)) * psi[o + k] + hd * psi[p + k] + g * zx[o + k];
        }
    }
}

// Right-hand side of the non-Markovian diagonal equation, written into out.
inline void rhs_nm_diagonal(const PropagationModel& m, const StateVector& psi, cplx zt, cplx g0, cplx g1,
                            StateVector& out, RhsWork& w) {
    const double gE = m.bath.gamma_E;
    const Eigen::Index n = m.sys.fock_dim;
    apply_h_zx(m, psi, out, w.a);
    double pd = 0.0, pa = 0.0;
    cplx da{};
    for (Eigen::Index k = 0; k < n; ++k) {
        pd += std::norm(psi[k]);
        pa += std::norm(psi[n + k]);
        da += std::conj(psi[k]) * psi[n + k];
    }
    const double nrm = pd + pa;
    const double ez = (pd - pa) / nrm, ex = 2.0 * da.real() / nrm, ey = 2.0 * da.imag() / nrm;
    const cplx cz = gE * zt, c0 = g0 * gE * gE, c1 = kI * g1 * gE * gE * m.sys.delta;
    const cplx shift = -cz * ez - c0 * ez * ez - c1 * (ex + kI * ez * ey);
    const cplx cl = cz + c0 * ez, cy = c1 * kI * ez;
    // Z psi = (D, -A), X psi = (A, D), Y psi = (-i A, i D)
    for (Eigen::Index k = 0; k < n; ++k) {
        const cplx d = psi[k], a = psi[n + k];
        out[k] = -kI * out[k] + cl * d + c1 * a - kI * cy * a + shift * d;
        out[n + k] = -kI * out[n + k] - cl * a + c1 * d + kI * cy * d + shift * a;
    }
}

// Right-hand side of the non-Markovian off-diagonal equation, written into out.
inline void rhs_nm_offdiagonal(const PropagationModel& m, const StateVector& psi, cplx zt, cplx g0, cplx g1,
                               StateVector& out, RhsWork& w) {
    const double gE = m.bath.gamma_E;
    const Eigen::Index n = m.sys.fock_dim;
    apply_h_zx(m, psi, out, w.a);
    double pd = 0.0, pa = 0.0;
    cplx da{};
    for (Eigen::Index k = 0; k < n; ++k) {
        pd += std::norm(psi[k]);
        pa += std::norm(psi[n + k]);
        da += std::conj(psi[k]) * psi[n + k];
    }
    const double nrm = pd + pa;
    const double ez = (pd - pa) / nrm, ex = 2.0 * da.real() / nrm;
    const double ezx = psi.dot(w.a).real() / nrm;
    const cplx cz = gE * zt, c0 = g0 * gE * gE, c1 = -kI * g1 * gE * gE;
    const cplx ce = c1 * m.sys.epsilon, cg = c1 * 2.0 * m.sys.gamma;
    const cplx shift = -cz * ex - c0 * ex * ex - ce * ez - cg * ezx;
    const cplx cl = cz + c0 * ex;
    for (Eigen::Index k = 0; k < n; ++k) {
        const cplx d = psi[k], a = psi[n + k];
        out[k] = -kI * out[k] + cl * a + ce * d + cg * w.a[k] + shift * d;
        out[n + k] = -kI * out[n + k] + cl * d - ce * a + cg * w.a[n + k] + shift * a;
    }
}

inline StateVector rhs_nm_diagonal(const PropagationModel& m, const StateVector& psi, cplx zt, cplx g0, cplx g1) {
    RhsWork w(psi.size());
    StateVector out(psi.size());
    rhs_nm_diagonal(m, psi, zt, g0, g1, out, w);
    return out;
}

inline StateVector rhs_nm_offdiagonal(const PropagationModel& m, const StateVector& psi, cplx zt, cplx g0,
                                      cplx g1) {
    RhsWork w(psi.size());
    StateVector out(psi.size());
    rhs_nm_offdiagonal(m, psi, zt, g0, g1, out, w);
    return out;
}

// Classical RK4; f(stage, v, out) with stage 0 -> t, 1 -> t + dt/2, 2 -> t + dt.
template <class F>
inline void rk4_step(StateVector& psi, double dt, RhsWork& w, F&& f) {
    f(0, psi, w.k1);
    w.tmp = psi + (0.5 * dt) * w.k1;
    f(1, w.tmp, w.k2);
    w.tmp = psi + (0.5 * dt) * w.k2;
    f(1, w.tmp, w.k3);
    w.tmp = psi + dt * w.k3;
    f(2, w.tmp, w.k4);
    psi += (dt / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
}

inline StateVector initial_state(const PropagationModel& m, std::uint64_t seed) {
    int n0 = 0;
    if (m.cfg.thermal_vib) {
        const Eigen::VectorXd w = thermal_occupations(m.sys.omega_v, m.bath.temperature, m.sys.fock_dim);
        std::mt19937_64 rng(mix_seed(seed, 0x7f4a7c15u));
        std::discrete_distribution<int> d(w.data(), w.data() + w.size());
        n0 = d(rng);
    }
    return donor_state(m.sys.fock_dim, n0);
}

// Propagates one trajectory, calling sink(sample_index, psi) at every sample.
// Returns false if the state became non-finite.
template <class Sink>
inline bool propagate(const PropagationModel& m, std::uint64_t seed, Sink&& sink) {
    const auto& c = m.cfg;
    StateVector psi = initial_state(m, seed);
    std::size_t s = 0;
    sink(s++, psi);
    const double dt = c.dt;
    const double gE = m.bath.gamma_E;

    auto finite = [](const StateVector& v) { return v.allFinite(); };

    if (c.scheme == Scheme::MarkovSSE) {
        const NoisePath w = white_noise(dt, c.n_steps, seed);
        for (std::size_t k = 0; k < c.n_steps; ++k) {
            step_markovian_split(psi, m.U, m.P, gE, w.z[k].real() * dt, dt);
            if (!finite(psi)) return false;
            if ((k + 1) % c.sample_every == 0) sink(s++, psi);
        }
        return true;
    }

    if (c.scheme == Scheme::Closed) {
        RhsWork w(psi.size());
        auto f = [&](int, const StateVector& v, StateVector& out) {
            apply_h_zx(m, v, out, w.a);
            out *= -kI;
        };
        for (std::size_t k = 0; k < c.n_steps; ++k) {
            rk4_step(psi, dt, w, f);
            if (c.renormalize_each_step) psi /= psi.norm();
            if (!finite(psi)) return false;
            if ((k + 1) % c.sample_every == 0) sink(s++, psi);
        }
        return true;
    }

    const bool diag = c.scheme == Scheme::NM_Diagonal;
    const NoisePath z = m.synth.sample(seed);
    ShiftAccumulator acc = m.shift_proto;
    acc.reset();
    RhsWork work(psi.size()), rw(psi.size());
    acc.push(gE * expect(psi, m.P));
    for (std::size_t k = 0; k < c.n_steps; ++k) {
        const double t = dt * double(k);
        auto f = [&](int stage, const StateVector& v, StateVector& out) {
            const std::size_t i = 2 * k + std::size_t(stage);
            const cplx zt = z.z[i] + acc.at(t + 0.5 * dt * stage);
            if (diag) rhs_nm_diagonal(m, v, zt, m.g0h[i], m.g1h[i], out, rw);
            else rhs_nm_offdiagonal(m, v, zt, m.g0h[i], m.g1h[i], out, rw);
        };
        rk4_step(psi, dt, work, f);
        if (c.renormalize_each_step) psi /= psi.norm();
        if (!finite(psi)) return false;
        if ((k + 1) % m.mem_stride == 0) acc.push(gE * expect(psi, m.P));
        if ((k + 1) % c.sample_every == 0) sink(s++, psi);
    }
    return true;
}

struct TrajectoryResult {
    std::vector<double> t; // internal units
    std::vector<StateVector> states;
    bool valid{true};
    std::uint64_t seed{0};
};

inline TrajectoryResult run_trajectory(const PropagationModel& m, std::uint64_t seed) {
    TrajectoryResult r;
    r.seed = seed;
    const std::size_t ns = m.cfg.n_samples();
    r.states.reserve(ns);
    r.valid = propagate(m, seed, [&](std::size_t, const StateVector& v) { r.states.push_back(v); });
    for (std::size_t i = 0; i < r.states.size(); ++i)
        r.t.push_back(m.cfg.dt * double(i * m.cfg.sample_every));
    return r;
}

inline TrajectoryResult run_trajectory(const PropagatorConfig& cfg, const SystemParams& sys, const BathSpec& bath,
                                       std::uint64_t seed) {
    return run_trajectory(build_model(cfg, sys, bath), seed);
}

struct EnsembleResult {
    std::vector<double> t;                    // internal units
    std::vector<Eigen::Matrix2cd> rho;        // electronic density matrices
    std::vector<OperatorMatrix> rho_full;     // only if requested
    PopulationTrace populations;
    std::vector<double> pd_stderr;            // standard error of P_D per sample
    int n_traj_used{0};
    int n_invalid{0};
    double convergence_diag{0.0};             // standard error of P_D at the final time
};

namespace detail {

struct Accumulator {
    std::vector<Eigen::Matrix2cd> rho;
    std::vector<double> pd2;
    std::vector<OperatorMatrix> full;
    int n{0};
    int invalid{0};

    void init(std::size_t ns, bool keep_full, int dim) {
        rho.assign(ns, Eigen::Matrix2cd::Zero());
        pd2.assign(ns, 0.0);
        if (keep_full) full.assign(ns, OperatorMatrix::Zero(dim, dim));
    }
    void merge(const Accumulator& o) {
        for (std::size_t i = 0; i < rho.size(); ++i) {
            rho[i] += o.rho[i];
            pd2[i] += o.pd2[i];
            if (!full.empty()) full[i] += o.full[i];
        }
        n += o.n;
        invalid += o.invalid;
    }
};

} // namespace detail

inline std::uint64_t trajectory_seed(std::uint64_t master, std::size_t index) { return mix_seed(master, index); }

inline EnsembleResult run_ensemble(const PropagationModel& m) {
    const auto& c = m.cfg;
    const int ntraj = c.effective_traj();
    const std::size_t ns = c.n_samples();
    const int dim = m.sys.dim();
    const std::size_t nblocks = (std::size_t(ntraj) + c.block_size - 1) / c.block_size;
    std::vector<detail::Accumulator> blocks(nblocks);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string fail_msg;
    std::mutex fail_mu;

    auto work = [&]() {
        std::vector<Eigen::Matrix2cd> tr_rho(ns);
        std::vector<OperatorMatrix> tr_full;
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= nblocks || failed.load()) return;
            auto& acc = blocks[b];
            acc.init(ns, c.keep_full_rho, dim);
            const std::size_t i0 = b * c.block_size;
            const std::size_t i1 = std::min<std::size_t>(i0 + c.block_size, std::size_t(ntraj));
            for (std::size_t i = i0; i < i1; ++i) {
                const std::uint64_t base = trajectory_seed(c.master_seed, i);
                bool ok = false;
                for (int attempt = 0; attempt <= c.max_resample && !ok; ++attempt) {
                    const std::uint64_t seed = attempt == 0 ? base : mix_seed(base, std::uint64_t(attempt));
                    if (c.keep_full_rho) tr_full.assign(ns, OperatorMatrix());
                    ok = propagate(m, seed, [&](std::size_t k, const StateVector& v) {
                        const StateVector u = v / v.norm();
                        tr_rho[k] = reduced_from_state(u);
                        if (c.keep_full_rho) tr_full[k] = u * u.adjoint();
                    });
                    if (!ok) ++acc.invalid;
                }
                if (!ok) {
                    std::lock_guard<std::mutex> lk(fail_mu);
                    fail_msg = "trajectory " + std::to_string(i) + " invalid after resampling";
                    failed = true;
                    return;
                }
                for (std::size_t k = 0; k < ns; ++k) {
                    acc.rho[k] += tr_rho[k];
                    const double pd = tr_rho[k](0, 0).real();
                    acc.pd2[k] += pd * pd;
                    if (c.keep_full_rho) acc.full[k] += tr_full[k];
                }
                ++acc.n;
            }
        }
    };

    const int nth = std::max(1, std::min<int>(c.threads, int(nblocks)));
    if (nth == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nth; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failed) throw NumericalError("run_ensemble: " + fail_msg);

    detail::Accumulator total;
    total.init(ns, c.keep_full_rho, dim);
    for (const auto& b : blocks) total.merge(b);
    if (double(total.invalid) > c.max_invalid_fraction * double(ntraj))
        throw NumericalError("run_ensemble: " + std::to_string(total.invalid) + " invalid trajectories out of " +
                             std::to_string(ntraj));

    EnsembleResult r;
    r.n_traj_used = total.n;
    r.n_invalid = total.invalid;
    const double inv = 1.0 / double(total.n);
    r.t.resize(ns);
    r.rho.resize(ns);
    r.pd_stderr.resize(ns);
    std::vector<double> t_ps(ns);
    for (std::size_t k = 0; k < ns; ++k) {
        r.t[k] = c.dt * double(k * c.sample_every);
        t_ps[k] = units::internal_to_ps(r.t[k]);
        Eigen::Matrix2cd rho = total.rho[k] * inv;
        rho = 0.5 * (rho + rho.adjoint()).eval();
        r.rho[k] = rho;
        const double mean = rho(0, 0).real();
        const double var = std::max(0.0, total.pd2[k] * inv - mean * mean);
        r.pd_stderr[k] = total.n > 1 ? std::sqrt(var * double(total.n) / double(total.n - 1) / double(total.n)) : 0.0;
        if (c.keep_full_rho) {
            OperatorMatrix f = total.full[k] * inv;
            r.rho_full.push_back(0.5 * (f + f.adjoint()));
        }
    }
    r.populations = populations(t_ps, r.rho);
    r.convergence_diag = r.pd_stderr.back();
    return r;
}

inline EnsembleResult run_ensemble(const PropagatorConfig& cfg, const SystemParams& sys, const BathSpec& bath) {
    return run_ensemble(build_model(cfg, sys, bath));
}

} // namespace vaet
