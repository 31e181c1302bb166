#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "vaet/propagator.hpp"

using namespace vaet;

namespace {

SystemParams two_level(double eps, double delta, int n = 2) {
    SystemParams s;
    s.epsilon = eps;
    s.delta = delta;
    s.omega_v = 0.1487;
    s.gamma = 0.0;
    s.fock_dim = n;
    return s;
}

BathSpec ohmic_bath(double alpha, double gamma_E) {
    BathSpec b;
    b.family = BathFamily::Ohmic;
    b.alpha = alpha;
    b.omega_c = 0.5;
    b.temperature = 0.025;
    b.gamma_E = gamma_E;
    return b;
}

PropagatorConfig config(Scheme s, double dt, std::size_t steps, int traj = 1) {
    PropagatorConfig c;
    c.scheme = s;
    c.dt = dt;
    c.n_steps = steps;
    c.n_traj = traj;
    return c;
}

double donor(const StateVector& v) { return reduced_from_state(v / v.norm())(0, 0).real(); }

StateVector random_state(int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    StateVector v(dim);
    for (auto& x : v) x = cplx{nd(rng), nd(rng)};
    return v / v.norm();
}

// Exact exp(-i H t) applied to psi.
StateVector evolve_exact(const OperatorMatrix& h, const StateVector& psi, double t) {
    Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(h);
    const Eigen::VectorXcd ph = (es.eigenvalues().cast<cplx>() * cplx{0.0, -t}).array().exp().matrix();
    return es.eigenvectors() * ph.asDiagonal() * (es.eigenvectors().adjoint() * psi);
}

// Lindblad dephasing d rho / dt = -i[H, rho] + g^2 (P rho P - rho), RK4.
std::vector<double> lindblad_donor(const OperatorMatrix& h, const OperatorMatrix& p, double g, const StateVector& psi0,
                                   double dt, std::size_t steps, std::size_t every) {
    OperatorMatrix rho = psi0 * psi0.adjoint();
    auto f = [&](const OperatorMatrix& r) -> OperatorMatrix {
        return -kI * (h * r - r * h) + g * g * (p * r * p - r);
    };
    std::vector<double> out{partial_trace_vib(rho)(0, 0).real()};
    for (std::size_t k = 1; k <= steps; ++k) {
        const OperatorMatrix k1 = f(rho), k2 = f(rho + 0.5 * dt * k1), k3 = f(rho + 0.5 * dt * k2),
                             k4 = f(rho + dt * k3);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (k % every == 0) out.push_back(partial_trace_vib(rho)(0, 0).real());
    }
    return out;
}

} // namespace

TEST(Propagator, ClosedRabiOracle) {
    const double delta = 0.01, dt = 0.05;
    const std::size_t steps = std::size_t(std::ceil(10.0 * 2.0 * std::numbers::pi / delta / dt));
    PropagatorConfig c = config(Scheme::Closed, dt, steps);
    c.sample_every = 50;
    const TrajectoryResult r = run_trajectory(c, two_level(0.0, delta), BathSpec{}, 1);
    double err = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < r.states.size(); ++i) {
        const double pa = 1.0 - donor(r.states[i]);
        const double s = std::sin(0.5 * delta * r.t[i]);
        err = std::max(err, std::abs(pa - s * s));
        peak = std::max(peak, pa);
    }
    EXPECT_LT(err, 1e-6);
    EXPECT_GT(peak, 0.999999);
}

TEST(Propagator, ClosedMatchesExactDiagonalization) {
    SystemParams s{0.1487, 1e-4, 0.1487, 0.1, 10};
    PropagatorConfig c = config(Scheme::Closed, 0.02, 20000);
    c.sample_every = 1000;
    const PropagationModel m = build_model(c, s, BathSpec{});
    const TrajectoryResult r = run_trajectory(m, 1);
    const StateVector psi0 = donor_state(10);
    for (std::size_t i = 0; i < r.states.size(); ++i) {
        const StateVector ex = evolve_exact(m.H, psi0, r.t[i]);
        EXPECT_NEAR(donor(r.states[i]), donor(ex), 1e-8);
    }
}

TEST(Propagator, ClosedNormDriftWithoutRenormalization) {
    SystemParams s{0.1487, 1e-3, 0.1487, 0.1, 10};
    PropagatorConfig c = config(Scheme::Closed, 0.01, 10000);
    c.renormalize_each_step = false;
    c.sample_every = 10000;
    const PropagationModel m = build_model(c, s, BathSpec{});
    const TrajectoryResult r = run_trajectory(m, 1);
    EXPECT_LT(std::abs(r.states.back().norm() - 1.0), 1e-8);
    const double e0 = expect(r.states.front(), m.H), e1 = expect(r.states.back(), m.H);
    EXPECT_LT(std::abs(e1 - e0) / std::abs(e0), 1e-8);
}

TEST(Propagator, NormalizedAfterEveryStep) {
    PropagatorConfig c = config(Scheme::NM_OffDiagonal, 0.05, 400);
    const PropagationModel m = build_model(c, SystemParams{0.1487, 0.01, 0.1487, 0.05, 4}, ohmic_bath(0.05, 0.05));
    propagate(m, 3, [](std::size_t, const StateVector& v) { EXPECT_NEAR(v.norm(), 1.0, 1e-9); });
}

TEST(Propagator, SigmaZConservedWithoutTunneling) {
    SystemParams s{0.1, 0.0, 0.1487, 0.08, 6};
    for (Scheme sc : {Scheme::Closed, Scheme::MarkovSSE, Scheme::NM_Diagonal}) {
        PropagatorConfig c = config(sc, 0.05, 2000, 4);
        c.sample_every = 50;
        const BathSpec b = sc == Scheme::Closed ? BathSpec{} : ohmic_bath(0.05, 0.05);
        const EnsembleResult e = run_ensemble(c, s, b);
        for (double pd : e.populations.P_D) EXPECT_NEAR(pd, 1.0, 1e-12) << to_string(sc);
    }
}

TEST(Propagator, DarkStateIsUnitary) {
    // |D,0> is an eigenstate of sigma_z: noise and drift vanish, only H acts.
    SystemParams s{0.1, 0.0, 0.1487, 0.0, 3};
    PropagatorConfig c = config(Scheme::MarkovSSE, 0.05, 100);
    const PropagationModel m = build_model(c, s, ohmic_bath(0.0, 0.1));
    const TrajectoryResult r = run_trajectory(m, 9);
    const StateVector ex = evolve_exact(m.H, donor_state(3), r.t.back());
    EXPECT_LT((r.states.back() - ex).norm(), 1e-12);
}

TEST(Propagator, MarkovSplitStepMatchesLiteralStepForSmallDt) {
    SystemParams s = two_level(0.05, 0.03);
    const double dt = 1e-4, gE = 0.1;
    PropagatorConfig c = config(Scheme::MarkovSSE, dt, 1);
    const PropagationModel m = build_model(c, s, ohmic_bath(0.0, gE));
    const StateVector psi = random_state(4, 1);
    const double dW = 0.7 * std::sqrt(dt);
    StateVector a = psi;
    step_markovian_split(a, m.U, m.P, gE, dW, dt);
    const StateVector b = step_markovian(psi, m.H, gE * m.P, dW, dt);
    EXPECT_LT((a - b).norm(), 5e-6);
}

TEST(Propagator, DiagonalRhsMatchesLiteralEquation) {
    SystemParams s{0.13, 0.02, 0.11, 0.07, 5};
    BathSpec b = ohmic_bath(0.05, 0.05);
    PropagatorConfig c = config(Scheme::NM_Diagonal, 0.01, 4);
    const PropagationModel m = build_model(c, s, b);
    const StateVector psi = random_state(10, 2);
    const cplx zt{0.3, -0.2}, g0{0.4, 0.1}, g1{-0.2, 0.5};
    const double gE = b.gamma_E;
    const OperatorMatrix I = OperatorMatrix::Identity(10, 10);
    const double ez = expect(psi, m.Z), ex = expect(psi, m.X), ey = expect(psi, m.Y);
    const StateVector ref = -kI * (m.H * psi) + gE * zt * ((m.Z - ez * I) * psi) +
                            g0 * gE * gE * ((ez * m.Z - ez * ez * I) * psi) +
                            kI * g1 * gE * gE * s.delta * ((m.X + kI * ez * m.Y - (ex + kI * ez * ey) * I) * psi);
    EXPECT_LT((rhs_nm_diagonal(m, psi, zt, g0, g1) - ref).norm(), 1e-13);
}

TEST(Propagator, OffDiagonalRhsMatchesLiteralEquation) {
    SystemParams s{0.13, 0.02, 0.11, 0.07, 5};
    BathSpec b = ohmic_bath(0.05, 0.05);
    PropagatorConfig c = config(Scheme::NM_OffDiagonal, 0.01, 4);
    const PropagationModel m = build_model(c, s, b);
    const StateVector psi = random_state(10, 3);
    const cplx zt{0.3, -0.2}, g0{0.4, 0.1}, g1{-0.2, 0.5};
    const double gE = b.gamma_E;
    const OperatorMatrix I = OperatorMatrix::Identity(10, 10);
    const double ez = expect(psi, m.Z), ex = expect(psi, m.X), ezx = expect(psi, m.ZXv);
    const StateVector ref = -kI * (m.H * psi) + gE * zt * ((m.X - ex * I) * psi) +
                            g0 * gE * gE * ((ex * m.X - ex * ex * I) * psi) -
                            kI * g1 * gE * gE *
                                ((s.epsilon * (m.Z - ez * I) + 2.0 * s.gamma * (m.ZXv - ezx * I)) * psi);
    EXPECT_LT((rhs_nm_offdiagonal(m, psi, zt, g0, g1) - ref).norm(), 1e-13);
}

TEST(Propagator, ZeroCouplingReducesToClosed) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.1, 6};
    PropagatorConfig cc = config(Scheme::Closed, 0.05, 600);
    const TrajectoryResult ref = run_trajectory(cc, s, BathSpec{}, 5);
    for (Scheme sc : {Scheme::NM_Diagonal, Scheme::NM_OffDiagonal}) {
        PropagatorConfig c = config(sc, 0.05, 600);
        const TrajectoryResult r = run_trajectory(c, s, ohmic_bath(0.05, 0.0), 5);
        ASSERT_EQ(r.states.size(), ref.states.size());
        for (std::size_t i = 0; i < r.states.size(); ++i) EXPECT_LT((r.states[i] - ref.states[i]).norm(), 1e-12);
    }
}

TEST(Propagator, TrajectoriesDeterministicInSeed) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.05, 4};
    PropagatorConfig c = config(Scheme::NM_OffDiagonal, 0.05, 200);
    const PropagationModel m = build_model(c, s, ohmic_bath(0.05, 0.05));
    const TrajectoryResult a = run_trajectory(m, 17), b = run_trajectory(m, 17), d = run_trajectory(m, 18);
    for (std::size_t i = 0; i < a.states.size(); ++i) EXPECT_EQ(a.states[i], b.states[i]);
    EXPECT_NE(a.states.back(), d.states.back());
}

TEST(Propagator, MarkovEnsembleMatchesLindblad) {
    const SystemParams s = two_level(0.02, 0.05);
    const double gE = 0.1, dt = 0.02;
    for (CouplingKind kind : {CouplingKind::Diagonal, CouplingKind::OffDiagonal}) {
        PropagatorConfig c = config(Scheme::MarkovSSE, dt, 10000, 2000);
        c.coupling = kind;
        c.sample_every = 500;
        const PropagationModel m = build_model(c, s, ohmic_bath(0.0, gE));
        const EnsembleResult e = run_ensemble(m);
        const std::vector<double> ref = lindblad_donor(m.H, m.P, gE, donor_state(2), dt, 10000, 500);
        ASSERT_EQ(ref.size(), e.populations.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
            EXPECT_LT(std::abs(e.populations.P_D[i] - ref[i]), 4.0 * e.pd_stderr[i] + 2e-3)
                << to_string(kind) << " sample " << i;
    }
}

TEST(Propagator, MarkovLimitOfShortMemoryBath) {
    // C(t) = (kappa/2) exp(-kappa |t|) has unit area, the white-noise intensity
    // of the Markov equation; as kappa grows the diagonal non-Markovian ensemble
    // must approach the Markov one.
    const SystemParams s = two_level(0.02, 0.05);
    const double gE = 0.1, kappa = 20.0, dt = 0.005;
    const std::size_t steps = 16000, every = 1000;
    PropagatorConfig c = config(Scheme::NM_Diagonal, dt, steps, 400);
    c.sample_every = every;
    c.memory_dt = 0.02;
    BathSpec b = ohmic_bath(0.0, gE);
    PropagationModel m = build_model(c, s, b);
    CorrelationTable corr;
    corr.dt = dt * double(m.mem_stride);
    const std::size_t n_mem = steps / m.mem_stride + 3;
    for (std::size_t k = 0; k < n_mem; ++k) corr.values.push_back(0.5 * kappa * std::exp(-kappa * corr.dt * double(k)));
    inject_correlation(
        m, corr, [kappa](double w) { return kappa * kappa / (2.0 * std::numbers::pi * (kappa * kappa + w * w)); },
        0.0);
    const EnsembleResult nm = run_ensemble(m);

    PropagatorConfig mc = config(Scheme::MarkovSSE, dt, steps, 4000);
    mc.sample_every = every;
    const EnsembleResult mk = run_ensemble(mc, s, b);
    ASSERT_EQ(nm.populations.size(), mk.populations.size());
    for (std::size_t i = 1; i < nm.populations.size(); ++i) {
        const double se = std::hypot(nm.pd_stderr[i], mk.pd_stderr[i]);
        EXPECT_LT(std::abs(nm.populations.P_D[i] - mk.populations.P_D[i]), 3.0 * se + 2e-3) << "sample " << i;
    }
}

TEST(Propagator, EnsembleDensityMatrixSanity) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.05, 4};
    PropagatorConfig c = config(Scheme::NM_OffDiagonal, 0.05, 400, 64);
    c.sample_every = 20;
    c.keep_full_rho = true;
    const EnsembleResult e = run_ensemble(c, s, ohmic_bath(0.05, 0.05));
    for (std::size_t k = 0; k < e.rho.size(); ++k) {
        EXPECT_LT((e.rho[k] - e.rho[k].adjoint()).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_NEAR(e.rho[k].trace().real(), 1.0, 1e-8);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(e.rho[k]);
        EXPECT_GE(es.eigenvalues()(0), -10.0 * e.pd_stderr[k] - 1e-12);
        EXPECT_LT((partial_trace_vib(e.rho_full[k]) - e.rho[k]).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Propagator, SingleTrajectoryEnsemble) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.05, 4};
    PropagatorConfig c = config(Scheme::MarkovSSE, 0.05, 300, 1);
    c.master_seed = 44;
    const PropagationModel m = build_model(c, s, ohmic_bath(0.0, 0.05));
    const EnsembleResult e = run_ensemble(m);
    const TrajectoryResult r = run_trajectory(m, trajectory_seed(44, 0));
    for (std::size_t k = 0; k < r.states.size(); ++k)
        EXPECT_NEAR(e.populations.P_D[k], r.states[k].head(4).squaredNorm() / r.states[k].squaredNorm(), 1e-14);
    EXPECT_EQ(e.pd_stderr.back(), 0.0);
}

TEST(Propagator, DeterministicEnsembleIsPure) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.05, 4};
    PropagatorConfig c = config(Scheme::MarkovSSE, 0.05, 300, 8);
    c.keep_full_rho = true;
    c.sample_every = 30;
    const EnsembleResult e = run_ensemble(c, s, ohmic_bath(0.0, 0.0));
    for (const auto& f : e.rho_full) EXPECT_NEAR((f * f).trace().real(), 1.0, 1e-8);
}

TEST(Propagator, StandardErrorScaling) {
    SystemParams s = two_level(0.02, 0.05);
    PropagatorConfig c = config(Scheme::MarkovSSE, 0.05, 2000, 1000);
    c.sample_every = 100;
    const BathSpec b = ohmic_bath(0.0, 0.1);
    const double se1 = run_ensemble(c, s, b).convergence_diag;
    c.n_traj = 4000;
    const double se4 = run_ensemble(c, s, b).convergence_diag;
    EXPECT_NEAR(se1 / se4, 2.0, 0.6);
}

TEST(Propagator, EnsembleIndependentOfThreadCount) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.05, 4};
    PropagatorConfig c = config(Scheme::NM_OffDiagonal, 0.05, 200, 40);
    c.sample_every = 10;
    const BathSpec b = ohmic_bath(0.05, 0.05);
    const EnsembleResult a = run_ensemble(c, s, b);
    c.threads = 4;
    const EnsembleResult d = run_ensemble(c, s, b);
    EXPECT_EQ(a.populations.P_D, d.populations.P_D);
    EXPECT_EQ(a.populations.coh_im, d.populations.coh_im);
    EXPECT_EQ(a.pd_stderr, d.pd_stderr);
}

TEST(Propagator, ThermalInitialStateSamplesFockLevel) {
    SystemParams s{0.1487, 0.01, 0.05, 0.0, 6};
    PropagatorConfig c = config(Scheme::Closed, 0.05, 1);
    c.thermal_vib = true;
    BathSpec b;
    b.temperature = 0.05;
    const PropagationModel m = build_model(c, s, b);
    int excited = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        const StateVector v = initial_state(m, seed);
        EXPECT_NEAR(v.norm(), 1.0, 1e-15);
        excited += std::abs(v(0)) == 0.0 ? 1 : 0;
    }
    // P(n > 0) = exp(-1) for omega_v = T.
    EXPECT_NEAR(excited / 400.0, std::exp(-1.0), 0.08);
}

TEST(Propagator, StabilityGuard) {
    SystemParams s{0.1487, 0.01, 0.1487, 0.1, 10};
    EXPECT_THROW(build_model(config(Scheme::Closed, 1.0, 10), s, BathSpec{}), ConfigError);
    EXPECT_NO_THROW(build_model(config(Scheme::MarkovSSE, 1.0, 10), s, BathSpec{}));
    PropagatorConfig c = config(Scheme::Closed, 0.05, 10);
    c.n_traj = 0;
    EXPECT_THROW(build_model(c, s, BathSpec{}), ConfigError);
}
