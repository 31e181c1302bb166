// ratetheory.hpp: Marcus-Jortner rate with one quantized mode and a classical bath.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "vaet/common.hpp"

namespace vaet {

struct MJParams {
    double V{0.0005};          // electronic coupling, Delta/2
    double epsilon{0.0};       // driving force
    double lambda_s{0.0125};   // classical (bath) reorganization
    double lambda_v{0.0};      // mode reorganization 2 gamma^2 / omega_v
    double omega_v{0.1487};
    double temperature{units::kelvin_to_ev(290.0)};
    int m_max{0};              // 0 = adaptive
    bool literature_variant{false}; // exponent (eps - lambda_s - m w)^2 instead of the printed form
};

inline double huang_rhys(double gamma, double omega_v) {
    if (!(omega_v > 0.0)) throw DomainError("omega_v must be > 0");
    return 2.0 * gamma * gamma / (omega_v * omega_v);
}

struct MJResult {
    double k_ps_inv{0.0};
    double k_ev{0.0};
    int terms{0};
    double poisson_mass{0.0}; // sum of Poisson weights actually used
};

inline void validate(const MJParams& p) {
    if (!(p.lambda_s > 0.0)) throw DomainError("mj_rate: lambda_s must be > 0");
    if (!(p.temperature > 0.0)) throw DomainError("mj_rate: temperature must be > 0");
    if (!(p.omega_v > 0.0)) throw DomainError("mj_rate: omega_v must be > 0");
    if (!(p.lambda_v >= 0.0)) throw DomainError("mj_rate: lambda_v must be >= 0");
}

inline MJResult mj_rate_detail(const MJParams& p) {
    validate(p);
    const double S = p.lambda_v / p.omega_v;
    const double four_lt = 4.0 * p.lambda_s * p.temperature;
    const double pref = 2.0 * std::numbers::pi * p.V * p.V / std::sqrt(std::numbers::pi * four_lt);
    const int cap = p.m_max > 0 ? p.m_max : 100000;
    double sum = 0.0, mass = 0.0;
    double w = std::exp(-S); // Poisson weight e^{-S} S^m / m!
    int m = 0;
    for (; m <= cap; ++m) {
        if (m > 0) w *= S / double(m);
        const double shift = p.literature_variant ? p.epsilon - p.lambda_s - m * p.omega_v
                                                  : p.epsilon - (p.lambda_s + p.lambda_v) + m * p.omega_v;
        sum += w * std::exp(-shift * shift / four_lt);
        mass += w;
        if (p.m_max > 0) continue;
        // Remaining Poisson mass bounds the neglected terms (Gaussian factor <= 1).
        if (double(m + 1) > S) {
            const double next = w * S / double(m + 1);
            const double ratio = S / double(m + 2);
            const double tail = ratio < 1.0 ? next / (1.0 - ratio) : next;
            if (tail <= 1e-12 * sum || tail < 1e-300 || S == 0.0) break;
        }
    }
    MJResult r;
    r.k_ev = pref * sum;
    r.k_ps_inv = units::rate_to_ps_inv(r.k_ev);
    r.terms = std::min(m, cap) + 1;
    r.poisson_mass = mass;
    return r;
}

inline double mj_rate(const MJParams& p) { return mj_rate_detail(p).k_ps_inv; }

struct MJCurve {
    std::vector<double> epsilon;
    std::vector<double> k_ps_inv;
    std::size_t argmax{0};
};

inline MJCurve mj_curve(const MJParams& base, const std::vector<double>& eps_grid) {
    if (eps_grid.empty()) throw DomainError("mj_curve: empty grid");
    MJCurve c;
    for (double e : eps_grid) {
        MJParams p = base;
        p.epsilon = e;
        c.epsilon.push_back(e);
        c.k_ps_inv.push_back(mj_rate(p));
        if (c.k_ps_inv.back() > c.k_ps_inv[c.argmax]) c.argmax = c.k_ps_inv.size() - 1;
    }
    return c;
}

} // namespace vaet
