// common.hpp: shared types, units, error kinds and seed derivation

#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace vaet {

using cplx = std::complex<double>;
using OperatorMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

namespace units {
// hbar in eV*ps; internal time unit is 1/eV (hbar = 1).
inline constexpr double kHbarEvPs = 6.582e-4;
inline constexpr double kBoltzmannEvPerK = 8.617e-5;

inline constexpr double ps_to_internal(double t_ps) { return t_ps / kHbarEvPs; }
inline constexpr double internal_to_ps(double t) { return t * kHbarEvPs; }
inline constexpr double fs_to_internal(double t_fs) { return ps_to_internal(t_fs * 1e-3); }
// rate given in eV (hbar = 1) to ps^-1
inline constexpr double rate_to_ps_inv(double k_ev) { return k_ev / kHbarEvPs; }
inline constexpr double kelvin_to_ev(double t_k) { return t_k * kBoltzmannEvPerK; }
} // namespace units

// Error kinds. Each carries a short machine-readable tag used by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error("shape", w) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error("numerical", w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error("data", w) {}
};
struct FitError : Error {
    explicit FitError(const std::string& w) : Error("fit", w) {}
};
struct AlignmentError : Error {
    explicit AlignmentError(const std::string& w) : Error("alignment", w) {}
};

// splitmix64 finalizer; used to derive independent per-trajectory and
// per-grid-point seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Uniform time grid t_k = k*dt, k = 0..n_points-1.
struct TimeGrid {
    double dt{1.0};
    std::size_t n_points{1};

    double at(std::size_t k) const { return static_cast<double>(k) * dt; }
    double t_max() const { return at(n_points - 1); }
};

} // namespace vaet
