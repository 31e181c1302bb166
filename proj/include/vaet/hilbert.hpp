// hilbert.hpp: electronic (x) vibrational product space and its operators
//
// Basis ordering is electronic-major: index = elec * N + n, with elec 0 = donor,
// elec 1 = acceptor.

#pragma once

#include <cmath>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "vaet/common.hpp"

namespace vaet {

inline constexpr int kDefaultFockDim = 10;
inline constexpr int kMaxFockDim = 64;

struct SystemParams {
    double epsilon{0.1487};
    double delta{0.001};
    double omega_v{0.1487};
    double gamma{0.0};
    int fock_dim{kDefaultFockDim};

    int dim() const { return 2 * fock_dim; }
};

enum class CouplingKind { Diagonal, OffDiagonal };

inline const char* to_string(CouplingKind k) {
    return k == CouplingKind::Diagonal ? "diagonal" : "offdiagonal";
}

inline void validate(const SystemParams& p, int max_fock = kMaxFockDim) {
    if (!(p.epsilon >= 0.0)) throw DomainError("epsilon must be >= 0");
    if (!(p.omega_v > 0.0)) throw DomainError("omega_v must be > 0");
    if (!(p.delta >= 0.0)) throw DomainError("delta must be >= 0");
    if (!(p.gamma >= 0.0)) throw DomainError("gamma must be >= 0");
    if (p.fock_dim < 2) throw DomainError("fock_dim must be >= 2");
    if (p.fock_dim > max_fock)
        throw ConfigError("fock_dim " + std::to_string(p.fock_dim) + " exceeds maximum " +
                          std::to_string(max_fock));
}

namespace pauli {
inline Eigen::Matrix2cd x() {
    Eigen::Matrix2cd m;
    m << 0, 1, 1, 0;
    return m;
}
inline Eigen::Matrix2cd y() {
    Eigen::Matrix2cd m;
    m << 0, -kI, kI, 0;
    return m;
}
inline Eigen::Matrix2cd z() {
    Eigen::Matrix2cd m;
    m << 1, 0, 0, -1;
    return m;
}
} // namespace pauli

// Truncated annihilation operator: <n|b|n+1> = sqrt(n+1).
inline OperatorMatrix annihilation(int n_levels) {
    OperatorMatrix b = OperatorMatrix::Zero(n_levels, n_levels);
    for (int n = 0; n + 1 < n_levels; ++n) b(n, n + 1) = std::sqrt(double(n + 1));
    return b;
}

inline OperatorMatrix position(int n_levels) {
    OperatorMatrix b = annihilation(n_levels);
    return b + b.adjoint();
}

// A (x) I_N for a 2x2 electronic operator.
inline OperatorMatrix lift_electronic(const Eigen::Matrix2cd& a, int n_levels) {
    return Eigen::kroneckerProduct(OperatorMatrix(a), OperatorMatrix::Identity(n_levels, n_levels))
        .eval();
}

// I_2 (x) B for an NxN vibrational operator.
inline OperatorMatrix lift_vibrational(const OperatorMatrix& b) {
    return Eigen::kroneckerProduct(OperatorMatrix::Identity(2, 2), b).eval();
}

inline OperatorMatrix build_system_hamiltonian(const SystemParams& p, int max_fock = kMaxFockDim) {
    validate(p, max_fock);
    const int n = p.fock_dim;
    OperatorMatrix num = OperatorMatrix::Zero(n, n);
    for (int k = 0; k < n; ++k) num(k, k) = double(k) + 0.5;

    OperatorMatrix h = lift_electronic(0.5 * p.epsilon * pauli::z() + 0.5 * p.delta * pauli::x(), n);
    h += lift_vibrational(p.omega_v * num);
    h += p.gamma * Eigen::kroneckerProduct(OperatorMatrix(pauli::z()), position(n)).eval();
    return h;
}

// Unit Pauli operator P (sigma_z or sigma_x) lifted to the composite space.
inline OperatorMatrix coupling_pauli(CouplingKind kind, int n_levels) {
    return lift_electronic(kind == CouplingKind::Diagonal ? pauli::z() : pauli::x(), n_levels);
}

inline OperatorMatrix build_coupling_operator(CouplingKind kind, double gamma_E, int n_levels) {
    if (!(gamma_E >= 0.0)) throw DomainError("gamma_E must be >= 0");
    if (n_levels < 1) throw DomainError("fock_dim must be >= 1");
    return gamma_E * coupling_pauli(kind, n_levels);
}

inline Eigen::Matrix2cd partial_trace_vib(const OperatorMatrix& rho) {
    if (rho.rows() != rho.cols()) throw ShapeError("partial_trace_vib: matrix not square");
    if (rho.rows() == 0 || rho.rows() % 2 != 0)
        throw ShapeError("partial_trace_vib: dimension must be even and nonzero");
    const Eigen::Index n = rho.rows() / 2;
    Eigen::Matrix2cd out;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) out(a, b) = rho.block(a * n, b * n, n, n).trace();
    return out;
}

// Electronic density matrix of a pure state without forming |psi><psi|.
inline Eigen::Matrix2cd reduced_from_state(const StateVector& psi) {
    const Eigen::Index n = psi.size() / 2;
    const auto d = psi.head(n);
    const auto a = psi.tail(n);
    Eigen::Matrix2cd out;
    out(0, 0) = d.squaredNorm();
    out(1, 1) = a.squaredNorm();
    out(0, 1) = std::conj(d.dot(a)); // sum_n psi_Dn conj(psi_An)
    out(1, 0) = std::conj(out(0, 1));
    return out;
}

// |D> (x) |n>
inline StateVector donor_state(int n_levels, int n = 0) {
    StateVector psi = StateVector::Zero(2 * n_levels);
    psi(n) = 1.0;
    return psi;
}

// Boltzmann weights of the truncated oscillator at temperature T (eV).
inline Eigen::VectorXd thermal_occupations(double omega_v, double temperature, int n_levels) {
    Eigen::VectorXd w(n_levels);
    for (int n = 0; n < n_levels; ++n)
        w(n) = temperature > 0.0 ? std::exp(-omega_v * n / temperature) : (n == 0 ? 1.0 : 0.0);
    return w / w.sum();
}

} // namespace vaet
