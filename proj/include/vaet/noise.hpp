// noise.hpp: colored Gaussian noise with covariance C, white noise for the
// Markov equation, and the shifted-noise memory integral.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "vaet/bath.hpp"
#include "vaet/common.hpp"

namespace vaet {

struct NoisePath {
    double dt{1.0};
    std::vector<cplx> z;
    std::uint64_t seed{0};
    std::vector<cplx> shifted;
};

struct SynthesisOptions {
    double period_factor{2.0};         // synthesis period / path duration
    double min_period{0.0};            // lower bound on the synthesis period
    std::size_t max_modes{1u << 23};   // FFT size ceiling
};

// Frequency-domain synthesis z(t_k) = sum_j sqrt(dw S(w_j)) xi_j e^{i w_j t_k} on
// w_j = j dw (both signs), evaluated for all t_k = k dt with one FFT. The
// covariance is E[z*(t) z(t')] = sum_j dw S(w_j) e^{-i w_j (t - t')}, a
// Riemann sum of the correlation integral with period 2 pi / dw.
class NoiseSynthesizer {
public:
    NoiseSynthesizer() = default;

    NoiseSynthesizer(std::function<double(double)> spectrum, double omega_max, double dt,
                     std::size_t n_points, const SynthesisOptions& opt = {})
        : dt_(dt), n_points_(n_points) {
        if (!(dt > 0.0) || n_points == 0) throw DomainError("noise: bad time grid");
        const double duration = dt * double(n_points);
        const double period = std::max(opt.period_factor * duration, duration + opt.min_period);
        std::size_t need = static_cast<std::size_t>(std::ceil(period / dt));
        // Nyquist frequency must cover the spectral support.
        if (omega_max > 0.0 && std::numbers::pi / dt < omega_max)
            throw ConfigError("noise: time step " + std::to_string(dt) +
                              " too coarse for spectral cutoff " + std::to_string(omega_max));
        std::size_t m = 64;
        while (m < need) m <<= 1;
        if (m > opt.max_modes)
            throw ConfigError("noise: grid needs " + std::to_string(m) +
                              " synthesis modes; maximum is " + std::to_string(opt.max_modes));
        m_ = m;
        const double dw = 2.0 * std::numbers::pi / (double(m) * dt);
        amp_.assign(m, 0.0);
        for (std::size_t idx = 0; idx < m; ++idx) {
            const long j = idx < m / 2 ? long(idx) : long(idx) - long(m);
            const double w = double(j) * dw;
            if (omega_max > 0.0 && std::abs(w) > omega_max) continue;
            const double s = spectrum(w);
            if (s > 0.0) amp_[idx] = std::sqrt(dw * s);
        }
    }

    std::size_t modes() const { return m_; }
    double dt() const { return dt_; }
    std::size_t n_points() const { return n_points_; }

    NoisePath sample(std::uint64_t seed) const {
        NoisePath p;
        p.dt = dt_;
        p.seed = seed;
        p.z.assign(n_points_, cplx{});
        bool any = false;
        for (double a : amp_) any = any || a != 0.0;
        if (!any) return p;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
        std::vector<cplx> c(m_), out;
        for (std::size_t i = 0; i < m_; ++i) {
            const double re = nd(rng), im = nd(rng);
            c[i] = amp_[i] * cplx{re, im};
        }
        Eigen::FFT<double> fft;
        fft.SetFlag(Eigen::FFT<double>::Unscaled);
        fft.inv(out, c);
        std::copy(out.begin(), out.begin() + long(n_points_), p.z.begin());
        return p;
    }

private:
    double dt_{1.0};
    std::size_t n_points_{0};
    std::size_t m_{0};
    std::vector<double> amp_;
};

inline NoiseSynthesizer make_synthesizer(const BathSpec& spec, double dt, std::size_t n_points,
                                         const SynthesisOptions& opt = {}) {
    validate(spec);
    if (spec.alpha == 0.0) return NoiseSynthesizer([](double) { return 0.0; }, 0.0, dt, n_points, opt);
    const CutoffInfo cut = frequency_cutoff(spec);
    // Periodic images C(t + P) decay as exp(-beta P / 2) for a structured bath.
    SynthesisOptions o = opt;
    if (spec.family == BathFamily::Structured && spec.beta > 0.0) o.min_period = std::max(o.min_period, 20.0 / spec.beta);
    return NoiseSynthesizer([spec](double w) { return two_sided_spectrum(spec, w); }, cut.omega_max, dt,
                            n_points, o);
}

inline NoisePath sample_noise(const BathSpec& spec, double dt, std::size_t n_points, std::uint64_t seed,
                              const SynthesisOptions& opt = {}) {
    return make_synthesizer(spec, dt, n_points, opt).sample(seed);
}

// Real Gaussian samples with variance 1/dt (unit-intensity white noise); the
// Wiener increment over one step is z[k] * dt.
inline NoisePath white_noise(double dt, std::size_t n_points, std::uint64_t seed) {
    if (!(dt > 0.0)) throw DomainError("white_noise: dt must be > 0");
    NoisePath p;
    p.dt = dt;
    p.seed = seed;
    p.z.resize(n_points);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(dt));
    for (auto& v : p.z) v = nd(rng);
    return p;
}

// z~(t_k) = z(t_k) + sum_{j<=k} w_j C(t_k - t_j) <L^dagger>_j, trapezoid weights.
inline cplx update_shifted_noise(NoisePath& path, const CorrelationTable& corr,
                                 const std::vector<cplx>& l_expect, std::size_t k) {
    if (k >= path.z.size() || k >= l_expect.size()) throw ShapeError("update_shifted_noise: index");
    if (corr.size() <= k) throw ShapeError("update_shifted_noise: correlation table too short");
    const double h = path.dt;
    cplx acc{};
    for (std::size_t j = 0; j <= k; ++j) {
        const double w = (j == 0 || j == k) ? 0.5 * h : h;
        acc += w * corr.values[k - j] * l_expect[j];
    }
    if (k == 0) acc = cplx{};
    const cplx zt = path.z[k] + acc;
    if (path.shifted.size() < path.z.size()) path.shifted.resize(path.z.size());
    path.shifted[k] = zt;
    return zt;
}

// Memory integral S(t_k) = int_0^{t_k} C(t_k - s) f(s) ds with f linear between
// nodes of spacing h, integrated exactly against C using the running integrals
// G0 = g0 and G1 = g1 of the correlation table.
class ShiftAccumulator {
public:
    ShiftAccumulator() = default;

    ShiftAccumulator(const CorrelationTable& corr, const KernelTable& ker) : h_(corr.dt) {
        const std::size_t n = ker.size();
        std::vector<cplx> p(n + 1), q(n + 1);
        for (std::size_t i = 1; i < n; ++i) {
            const cplx dg0 = ker.g0[i] - ker.g0[i - 1];
            const cplx dg1 = ker.g1[i] - ker.g1[i - 1];
            p[i] = (dg1 - double(i - 1) * h_ * dg0) / h_;
            q[i] = dg0 - p[i];
        }
        // Integral at node k: q_1 f_k + sum_{j=1}^{k-1} (p_j + q_{j+1}) f_{k-j} + p_k f_0.
        p_re_.resize(n);
        p_im_.resize(n);
        r_re_.resize(n);
        r_im_.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            p_re_[j] = p[j].real();
            p_im_[j] = p[j].imag();
            const cplx r = j == 0 ? q[1] : p[j] + q[j + 1];
            r_re_[j] = r.real();
            r_im_[j] = r.imag();
        }
    }

    void reset() {
        f_.clear();
        s_.clear();
    }

    double h() const { return h_; }
    std::size_t count() const { return f_.size(); }

    // Append the (real) integrand at the next node and return the integral there.
    cplx push(double f) {
        const std::size_t k = f_.size();
        if (k >= r_re_.size()) throw ShapeError("ShiftAccumulator: memory grid exhausted");
        f_.push_back(f);
        if (k == 0) {
            s_.push_back({});
            return {};
        }
        double re = 0.0, im = 0.0;
        const double* fk = f_.data() + k;
        for (std::size_t j = 0; j < k; ++j) {
            re += r_re_[j] * fk[-std::ptrdiff_t(j)];
            im += r_im_[j] * fk[-std::ptrdiff_t(j)];
        }
        re += p_re_[k] * f_[0];
        im += p_im_[k] * f_[0];
        s_.push_back({re, im});
        return s_.back();
    }

    // Integral at time t >= last node, extrapolated linearly from the last two nodes.
    cplx at(double t) const {
        if (s_.empty()) return {};
        const std::size_t k = s_.size() - 1;
        if (k == 0) return s_[0];
        const double r = (t - double(k) * h_) / h_;
        return s_[k] + r * (s_[k] - s_[k - 1]);
    }

private:
    double h_{1.0};
    std::vector<double> p_re_, p_im_, r_re_, r_im_;
    std::vector<double> f_;
    std::vector<cplx> s_;
};

struct NoiseSelfTest {
    std::vector<double> t;
    std::vector<cplx> target, empirical;
    double band{0.0};          // 5 C(0) / sqrt(M)
    double fraction_within{0.0};
    double rms_error{0.0};     // RMS |empirical - target| over the grid
    int paths{0};
    bool pass{false};
};

// Empirical E[z*(t) z(0)] over M independent paths against the quadrature C(t).
inline NoiseSelfTest noise_selftest(const BathSpec& spec, double dt, std::size_t n_points, int paths,
                                    std::uint64_t master_seed, double required_fraction = 0.99) {
    NoiseSelfTest r;
    r.paths = paths;
    const CorrelationTable c = correlation_function(spec, dt, n_points);
    const NoiseSynthesizer syn = make_synthesizer(spec, dt, n_points);
    std::vector<cplx> acc(n_points, cplx{});
    for (int m = 0; m < paths; ++m) {
        const NoisePath p = syn.sample(mix_seed(master_seed, std::uint64_t(m)));
        for (std::size_t k = 0; k < n_points; ++k) acc[k] += std::conj(p.z[k]) * p.z[0];
    }
    const double c0 = std::abs(c.values[0]);
    r.band = 5.0 * c0 / std::sqrt(double(paths));
    std::size_t ok = 0;
    double sq = 0.0;
    for (std::size_t k = 0; k < n_points; ++k) {
        const cplx e = acc[k] / double(paths);
        r.t.push_back(dt * double(k));
        r.target.push_back(c.values[k]);
        r.empirical.push_back(e);
        const double d = std::abs(e - c.values[k]);
        sq += d * d;
        if (d <= r.band) ++ok;
    }
    r.fraction_within = double(ok) / double(n_points);
    r.rms_error = std::sqrt(sq / double(n_points));
    r.pass = r.fraction_within >= required_fraction;
    return r;
}

} // namespace vaet
