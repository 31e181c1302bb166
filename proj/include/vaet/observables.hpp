// observables.hpp: populations, stationary estimates and exponential tail fits.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vaet/common.hpp"

namespace vaet {

struct PopulationTrace {
    std::vector<double> t; // ps
    std::vector<double> P_D, P_A;
    std::vector<double> coh_re, coh_im;

    std::size_t size() const { return t.size(); }
};

inline PopulationTrace populations(const std::vector<double>& t_ps, const std::vector<Eigen::Matrix2cd>& rho) {
    if (t_ps.size() != rho.size()) throw ShapeError("populations: time and state counts differ");
    PopulationTrace p;
    p.t = t_ps;
    const std::size_t n = rho.size();
    p.P_D.resize(n);
    p.P_A.resize(n);
    p.coh_re.resize(n);
    p.coh_im.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& r = rho[k];
        const double tr = r.trace().real();
        if (std::abs(tr - 1.0) > 1e-6)
            throw DataError("populations: trace " + std::to_string(tr) + " at index " + std::to_string(k));
        p.P_D[k] = r(0, 0).real();
        p.P_A[k] = r(1, 1).real();
        p.coh_re[k] = r(0, 1).real();
        p.coh_im[k] = r(0, 1).imag();
    }
    return p;
}

struct StationaryEstimate {
    double P_inf{0.0};
    double stddev{0.0};
    double trend{0.0};        // slope of a linear fit over the tail window (1/ps)
    double trend_stderr{0.0};
    bool non_stationary{false};
};

namespace detail {

struct LineFit {
    double slope{0.0}, intercept{0.0}, r2{0.0}, slope_stderr{0.0};
};

inline LineFit ols(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    LineFit f;
    if (n < 2) return f;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (f.intercept + f.slope * x[i]);
        sse += e * e;
    }
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    if (n > 2) f.slope_stderr = std::sqrt(sse / double(n - 2) / sxx);
    return f;
}

} // namespace detail

inline StationaryEstimate estimate_stationary(const PopulationTrace& tr, double tail_fraction = 0.2,
                                              std::size_t min_points = 50) {
    const std::size_t n = tr.size();
    const std::size_t m = static_cast<std::size_t>(std::floor(double(n) * tail_fraction));
    if (m < min_points)
        throw DataError("estimate_stationary: tail window has " + std::to_string(m) + " points, need " +
                        std::to_string(min_points));
    std::vector<double> x(tr.t.end() - long(m), tr.t.end());
    std::vector<double> y(tr.P_D.end() - long(m), tr.P_D.end());
    StationaryEstimate e;
    // Offsets from the first value keep a constant tail exact.
    double s = 0.0;
    for (double v : y) s += v - y.front();
    e.P_inf = y.front() + s / double(m);
    double v2 = 0.0;
    for (double v : y) v2 += (v - e.P_inf) * (v - e.P_inf);
    e.stddev = std::sqrt(v2 / double(m > 1 ? m - 1 : 1));
    const auto f = detail::ols(x, y);
    e.trend = f.slope;
    e.trend_stderr = f.slope_stderr;
    e.non_stationary = std::abs(f.slope) > 3.0 * f.slope_stderr && std::abs(f.slope) > 0.0 &&
                       e.stddev > 1e-12;
    return e;
}

namespace flags {
inline constexpr const char* kLowR2 = "low_r2";
inline constexpr const char* kGrowth = "growth";
inline constexpr const char* kNonStationary = "non_stationary";
inline constexpr const char* kNoExpWindow = "no_exponential_window";
inline constexpr const char* kUnresolved = "unresolved_amplitude";
inline constexpr const char* kFitFailed = "fit_failed";
} // namespace flags

struct RateFit {
    double k_rel{0.0};   // ps^-1
    double k_stderr{0.0}; // OLS slope standard error
    double P_inf{0.0};
    double t0{0.0};      // ps
    double t_end{0.0};   // ps
    double r_squared{0.0};
    std::size_t n_points{0};
    std::vector<std::string> flags;

    bool flagged() const { return !flags.empty(); }
    bool has(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

inline void add_flag(std::vector<std::string>& fl, const std::string& f) {
    if (std::find(fl.begin(), fl.end(), f) == fl.end()) fl.push_back(f);
}

// OLS of ln|P_D - P_inf| against t over t >= t0, stopping at the first sign
// change of P_D - P_inf; points within 1e-6 of zero are skipped.
inline RateFit extract_rate(const PopulationTrace& tr, double P_inf, double t0, std::size_t min_points = 20) {
    std::vector<double> x, y;
    int sign = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (tr.t[i] < t0) continue;
        const double d = tr.P_D[i] - P_inf;
        if (std::abs(d) < 1e-6) continue;
        const int s = d > 0.0 ? 1 : -1;
        if (sign == 0) sign = s;
        if (s != sign) break;
        x.push_back(tr.t[i]);
        y.push_back(std::log(std::abs(d)));
    }
    if (x.size() < min_points)
        throw FitError("extract_rate: " + std::to_string(x.size()) + " usable points, need " +
                       std::to_string(min_points));
    // Shift the abscissa to the window start so the fit is origin independent.
    const double x0 = x.front();
    for (auto& v : x) v -= x0;
    const auto f = detail::ols(x, y);
    RateFit r;
    r.k_rel = -f.slope;
    r.k_stderr = f.slope_stderr;
    r.P_inf = P_inf;
    r.t0 = x0;
    r.t_end = x0 + x.back();
    r.r_squared = f.r2;
    r.n_points = x.size();
    if (r.k_rel < 0.0) add_flag(r.flags, flags::kGrowth);
    if (r.r_squared < 0.9) add_flag(r.flags, flags::kLowR2);
    return r;
}

struct WindowChoice {
    double t0{0.0};
    double r_squared{0.0};
    bool fallback{false};
};

// Earliest decile start whose tail fit reaches r2 >= 0.98; otherwise the best.
inline WindowChoice choose_fit_window(const PopulationTrace& tr, double P_inf, double r2_target = 0.98) {
    WindowChoice best;
    best.fallback = true;
    best.r_squared = -std::numeric_limits<double>::infinity();
    if (tr.size() == 0) return best;
    const double ta = tr.t.front(), tb = tr.t.back();
    for (int d = 0; d < 9; ++d) {
        const double t0 = ta + (tb - ta) * double(d) / 10.0;
        try {
            const auto f = extract_rate(tr, P_inf, t0);
            if (f.r_squared >= r2_target) return {t0, f.r_squared, false};
            if (f.r_squared > best.r_squared) best = {t0, f.r_squared, true};
        } catch (const FitError&) {
        }
    }
    if (!std::isfinite(best.r_squared)) best = {ta, 0.0, true};
    return best;
}

// -d/dt ln|P_D - P_inf| by central differences; noisy by construction.
inline std::vector<double> instantaneous_rate(const PopulationTrace& tr, double P_inf) {
    const std::size_t n = tr.size();
    std::vector<double> k(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double a = std::abs(tr.P_D[i - 1] - P_inf), b = std::abs(tr.P_D[i + 1] - P_inf);
        if (a > 0.0 && b > 0.0) k[i] = -(std::log(b) - std::log(a)) / (tr.t[i + 1] - tr.t[i - 1]);
    }
    return k;
}

} // namespace vaet
