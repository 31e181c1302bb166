// bath.hpp: spectral densities, correlation function, reorganization energies
// and memory kernels g0, g1, g2.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/FFT>

#include "vaet/common.hpp"

namespace vaet {

enum class BathFamily { Ohmic, Structured };

inline const char* to_string(BathFamily f) { return f == BathFamily::Ohmic ? "ohmic" : "structured"; }

struct BathSpec {
    BathFamily family{BathFamily::Ohmic};
    double alpha{0.0};
    double omega_c{0.5};   // Ohmic cutoff
    double omega_0{0.1};   // structured peak
    double beta{0.005};    // structured width
    double temperature{units::kelvin_to_ev(290.0)};
    double gamma_E{0.0};
};

inline void validate(const BathSpec& s) {
    if (!(s.alpha >= 0.0)) throw DomainError("alpha must be >= 0");
    if (!(s.temperature > 0.0)) throw DomainError("temperature must be > 0");
    if (!(s.gamma_E >= 0.0)) throw DomainError("gamma_E must be >= 0");
    if (s.family == BathFamily::Ohmic) {
        if (!(s.omega_c > 0.0)) throw DomainError("omega_c must be > 0");
    } else {
        if (!(s.omega_0 > 0.0)) throw DomainError("omega_0 must be > 0");
        if (!(s.beta >= 0.0)) throw DomainError("beta must be >= 0");
    }
}

// J(w)/w, finite at w = 0 for both families.
inline double spectral_over_omega(const BathSpec& s, double w) {
    if (s.family == BathFamily::Ohmic) return 2.0 * s.alpha * std::exp(-w / s.omega_c);
    const double w0sq = s.omega_0 * s.omega_0;
    const double d = w0sq - w * w;
    return s.alpha * w0sq / (d * d + s.beta * s.beta * w * w);
}

inline double spectral_density(const BathSpec& s, double w) {
    if (w < 0.0) throw DomainError("spectral_density: omega must be >= 0");
    return w * spectral_over_omega(s, w);
}

// w * coth(w / 2T), equal to 2T at w = 0.
inline double omega_coth(double w, double temperature) {
    const double x = w / (2.0 * temperature);
    if (std::abs(x) < 1e-4) return 2.0 * temperature * (1.0 + x * x / 3.0);
    return w / std::tanh(x);
}

// Two-sided spectrum S(w) with C(t) = int S(w) exp(-i w t) dw over the real line:
// S(w) = J(w)(n(w)+1)/pi for w > 0 and J(|w|) n(|w|)/pi for w < 0.
inline double two_sided_spectrum(const BathSpec& s, double w) {
    const double a = std::abs(w);
    const double jw = spectral_over_omega(s, a);
    const double T = s.temperature;
    if (a < 1e-12 * T) return jw * T / std::numbers::pi;
    const double x = a / T;
    // a*(n+1) = a / (1 - e^{-x}),  a*n = a / (e^{x} - 1)
    const double occ = w > 0.0 ? a / -std::expm1(-x) : a / std::expm1(x);
    return jw * occ / std::numbers::pi;
}

// Frequency beyond which the remaining spectral weight is below rel_tol of the
// total; returns the cutoff and an estimate of the neglected weight.
struct CutoffInfo {
    double omega_max{0.0};
    double tail_bound{0.0};
};

inline CutoffInfo frequency_cutoff(const BathSpec& s, double rel_tol = 1e-6) {
    const double T = s.temperature;
    double om = s.family == BathFamily::Ohmic ? std::max(50.0 * T, 20.0 * s.omega_c)
                                              : std::max(50.0 * T, 20.0 * s.omega_0);
    // |C(0)| scale: integral of J coth / pi.
    auto re_c0 = [&](double hi) {
        auto f = [&](double w) { return spectral_over_omega(s, w) * omega_coth(w, T); };
        return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, 0.0, hi, 20, 1e-10) /
               std::numbers::pi;
    };
    auto tail = [&](double lo) {
        auto f = [&](double w) { return spectral_over_omega(s, w) * omega_coth(w, T); };
        return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
                   f, lo, std::numeric_limits<double>::infinity(), 20, 1e-10) /
               std::numbers::pi;
    };
    const double scale = re_c0(om) + tail(om);
    if (scale <= 0.0) return {om, 0.0};
    double t = tail(om);
    for (int it = 0; it < 60 && t > rel_tol * scale; ++it) {
        om *= 1.25;
        t = tail(om);
    }
    return {om, t};
}

struct CorrelationTable {
    double dt{1.0};
    std::vector<cplx> values;
    double omega_max{0.0};
    double tail_bound{0.0};
    double est_error{0.0};

    std::size_t size() const { return values.size(); }
    double t_max() const { return values.empty() ? 0.0 : dt * double(values.size() - 1); }
};

// C(t) at a single time by adaptive quadrature; used for spot checks.
inline cplx correlation_at(const BathSpec& s, double t, double rel_tol = 1e-10) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    const double T = s.temperature;
    const CutoffInfo cut = frequency_cutoff(s);
    auto fr = [&](double w) { return spectral_over_omega(s, w) * omega_coth(w, T) * std::cos(w * t); };
    auto fi = [&](double w) { return -spectral_over_omega(s, w) * w * std::sin(w * t); };
    const double re = GK::integrate(fr, 0.0, cut.omega_max, 30, rel_tol);
    const double im = GK::integrate(fi, 0.0, cut.omega_max, 30, rel_tol);
    return cplx{re, im} / std::numbers::pi;
}

// C(k dt), k = 0..n_points-1, by the trapezoid rule on a uniform frequency grid
// evaluated with one FFT. The grid period P = 2 pi / dw is chosen so that the
// periodic images C(t + nP) are negligible over the table; est_error is the
// largest deviation from adaptive quadrature at a few probe times plus the
// neglected spectral tail.
inline CorrelationTable correlation_function(const BathSpec& s, double dt, std::size_t n_points,
                                             double rel_tol = 1e-8) {
    validate(s);
    if (!(dt > 0.0) || n_points == 0) throw DomainError("correlation_function: bad grid");
    CorrelationTable tab;
    tab.dt = dt;
    tab.values.assign(n_points, cplx{});
    if (s.alpha == 0.0) return tab;

    const CutoffInfo cut = frequency_cutoff(s, rel_tol);
    tab.omega_max = cut.omega_max;
    tab.tail_bound = cut.tail_bound;

    const std::size_t r = std::max<std::size_t>(1, std::size_t(std::ceil(cut.omega_max * dt / std::numbers::pi)));
    const double hf = dt / double(r);
    const double t_max = dt * double(n_points - 1);
    double period = std::max(8.0 * t_max, 1e4);
    if (s.family == BathFamily::Structured && s.beta > 0.0) period = std::max(period, 100.0 / s.beta);
    std::size_t m = 1024;
    while (double(m) * hf < period && m < (std::size_t(1) << 24)) m <<= 1;
    while (m < 2 * r * n_points) m <<= 1;
    const double dw = 2.0 * std::numbers::pi / (double(m) * hf);

    std::vector<cplx> a(m), out;
    for (std::size_t j = 0; j < m; ++j) {
        const double w = (j < m / 2 ? double(j) : double(j) - double(m)) * dw;
        a[j] = two_sided_spectrum(s, w) * dw;
    }
    Eigen::FFT<double> fft;
    fft.fwd(out, a);
    for (std::size_t k = 0; k < n_points; ++k) tab.values[k] = out[k * r];
    tab.values[0].imag(0.0);

    double err = 0.0;
    for (double t : {0.0, 3.0 * dt, 0.5 * std::min(t_max, 200.0)}) {
        const std::size_t k = std::size_t(std::llround(t / dt));
        if (k >= n_points) continue;
        err = std::max(err, std::abs(tab.values[k] - correlation_at(s, dt * double(k))));
    }
    tab.est_error = err + cut.tail_bound;
    return tab;
}

// Reorganization energy (1/pi) int J(w)/w dw.
inline double reorganization_energy_bath(const BathSpec& s) {
    validate(s);
    if (s.alpha == 0.0) return 0.0;
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    auto f = [&](double w) { return spectral_over_omega(s, w); };
    // Structured peaks are split out so the adaptive rule resolves their width.
    std::vector<double> cuts{0.0};
    if (s.family == BathFamily::Structured) {
        const double w = std::max(s.beta, 1e-3 * s.omega_0);
        for (double c : {s.omega_0 - 20.0 * w, s.omega_0 - w, s.omega_0, s.omega_0 + w, s.omega_0 + 20.0 * w})
            if (c > cuts.back()) cuts.push_back(c);
    }
    cuts.push_back(std::numeric_limits<double>::infinity());
    double v = 0.0, err = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double e = 0.0;
        v += GK::integrate(f, cuts[i], cuts[i + 1], 15, 1e-11, &e);
        err += e;
    }
    if (!std::isfinite(v) || err > 1e-6 * std::abs(v))
        throw NumericalError("reorganization_energy_bath: integral did not converge (error estimate " +
                             std::to_string(err) + ")");
    return v / std::numbers::pi;
}

// Figure-caption convention lambda = alpha*omega_c/2, defined for Ohmic baths only.
inline double reorganization_energy_bath_caption(const BathSpec& s) {
    if (s.family != BathFamily::Ohmic)
        throw DomainError("caption reorganization convention is defined for Ohmic baths only");
    return 0.5 * s.alpha * s.omega_c;
}

enum class LambdaConvention { Integral, Caption };

inline double reorganization_energy_bath(const BathSpec& s, LambdaConvention c) {
    return c == LambdaConvention::Caption ? reorganization_energy_bath_caption(s)
                                          : reorganization_energy_bath(s);
}

inline double reorganization_energy_mode(double gamma, double omega_v) {
    if (!(omega_v > 0.0)) throw DomainError("omega_v must be > 0");
    return 2.0 * gamma * gamma / omega_v;
}

inline double total_reorganization_energy(double lambda_bath, double gamma, double omega_v) {
    return lambda_bath + reorganization_energy_mode(gamma, omega_v);
}

struct KernelTable {
    double dt{1.0};
    std::vector<cplx> g0, g1, g2;

    std::size_t size() const { return g0.size(); }
};

// Running integral of f on a uniform grid: Simpson on even counts, Simpson 3/8
// closing the last three intervals on odd counts, trapezoid for a single interval.
inline std::vector<cplx> cumulative_integral(const std::vector<cplx>& f, double h) {
    const std::size_t n = f.size();
    std::vector<cplx> out(n, cplx{});
    if (n < 2) return out;
    out[1] = 0.5 * h * (f[0] + f[1]);
    for (std::size_t k = 2; k < n; ++k) {
        if (k % 2 == 0) {
            out[k] = out[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
        } else {
            out[k] = out[k - 3] + 3.0 * h / 8.0 * (f[k - 3] + 3.0 * f[k - 2] + 3.0 * f[k - 1] + f[k]);
        }
    }
    return out;
}

// Discrete causal convolution sum_{j<=k} a[j] b[k-j] via zero-padded FFT.
inline std::vector<cplx> causal_convolution(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    const std::size_t n = a.size();
    std::size_t m = 1;
    while (m < 2 * n) m <<= 1;
    std::vector<cplx> pa(m, cplx{}), pb(m, cplx{}), fa, fb, out;
    std::copy(a.begin(), a.end(), pa.begin());
    std::copy(b.begin(), b.end(), pb.begin());
    Eigen::FFT<double> fft;
    fft.fwd(fa, pa);
    fft.fwd(fb, pb);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    fft.inv(out, fa);
    out.resize(n);
    return out;
}

// g0(t) = int_0^t C(u) du, g1(t) = int_0^t C(u) u du,
// g2(t) = int_0^t C(t-s) (t-s) g0(s) ds.
inline KernelTable memory_kernels(const CorrelationTable& corr) {
    KernelTable k;
    k.dt = corr.dt;
    const std::size_t n = corr.size();
    const double h = corr.dt;
    k.g0 = cumulative_integral(corr.values, h);
    std::vector<cplx> cu(n);
    for (std::size_t i = 0; i < n; ++i) cu[i] = corr.values[i] * (h * double(i));
    k.g1 = cumulative_integral(cu, h);
    // Trapezoid product sum; both end terms vanish since cu(0) = g0(0) = 0.
    k.g2 = causal_convolution(cu, k.g0);
    for (auto& v : k.g2) v *= h;
    if (n > 0) k.g0[0] = k.g1[0] = k.g2[0] = cplx{};
    return k;
}

// Cubic Lagrange interpolation of a uniformly sampled sequence at time t.
inline cplx interpolate(const std::vector<cplx>& v, double h, double t) {
    const std::size_t n = v.size();
    if (n == 0) return {};
    if (n == 1 || t <= 0.0) return v[0];
    const double x = t / h;
    if (x >= double(n - 1)) return v[n - 1];
    std::size_t i = static_cast<std::size_t>(x);
    const double r = x - double(i);
    if (r == 0.0) return v[i];
    if (n < 4) return (1.0 - r) * v[i] + r * v[i + 1];
    std::size_t i0 = i == 0 ? 0 : (i + 2 >= n ? n - 4 : i - 1);
    const double u = x - double(i0);
    cplx out{};
    for (std::size_t a = 0; a < 4; ++a) {
        double w = 1.0;
        for (std::size_t b = 0; b < 4; ++b)
            if (b != a) w *= (u - double(b)) / (double(a) - double(b));
        out += w * v[i0 + a];
    }
    return out;
}

} // namespace vaet
