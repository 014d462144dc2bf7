#pragma once

#include "pihedge/hedging.hpp"

#include <algorithm>
#include <cmath>

namespace pihedge {

// European Black-Scholes value and delta. rate and sigma are per unit of tau.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double bs_price(OptionKind kind, double s, double k, double rate, double sigma, double tau) {
    if (tau <= 0.0 || sigma <= 0.0) {
        const double fwd = s - k * std::exp(-rate * std::max(tau, 0.0));
        return kind == OptionKind::Call ? std::max(fwd, 0.0) : std::max(-fwd, 0.0);
    }
    const double sd = sigma * std::sqrt(tau);
    const double d1 = (std::log(s / k) + (rate + 0.5 * sigma * sigma) * tau) / sd, d2 = d1 - sd;
    const double df = std::exp(-rate * tau);
    return kind == OptionKind::Call ? s * normal_cdf(d1) - k * df * normal_cdf(d2)
                                    : k * df * normal_cdf(-d2) - s * normal_cdf(-d1);
}

inline double bs_delta(OptionKind kind, double s, double k, double rate, double sigma, double tau) {
    if (tau <= 0.0 || sigma <= 0.0) {
        const bool itm = kind == OptionKind::Call ? s > k : s < k;
        return itm ? (kind == OptionKind::Call ? 1.0 : -1.0) : 0.0;
    }
    const double d1 = (std::log(s / k) + (rate + 0.5 * sigma * sigma) * tau) / (sigma * std::sqrt(tau));
    return kind == OptionKind::Call ? normal_cdf(d1) : normal_cdf(d1) - 1.0;
}

}  // namespace pihedge
