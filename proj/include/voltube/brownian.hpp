#pragma once

// Distribution of the running supremum of |Brownian motion|, plus the
// two-sided boundary-crossing probability of a Brownian bridge.  The series
// here back the regularity-window constants and give the simulation tests an
// estimator of sup-functionals that is unbiased under discrete monitoring.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "voltube/common.hpp"

namespace voltube::brownian {

// P(sup_{u <= 1} |B_u| <= a) by the reflection-principle series
//   sum_{k in Z} (-1)^k [Phi((2k+1)a) - Phi((2k-1)a)],
// truncated once terms drop below 1e-12.  Being alternating with O(1) terms,
// the series carries ~1e-16 of cancellation noise, so it is only trusted where
// the value itself is well above that (a >= ~0.7).
inline double sup_abs_cdf_reflection(double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("sup_abs_cdf: a must be >= 0");
    if (a == 0.0) return 0.0;
    double p = norm_cdf(a) - norm_cdf(-a);  // k = 0
    for (int k = 1; k < 1000; ++k) {
        // Terms k and -k coincide, so fold them together.
        const double term = norm_cdf((2.0 * k + 1.0) * a) - norm_cdf((2.0 * k - 1.0) * a);
        const double contrib = 2.0 * ((k % 2 == 0) ? term : -term);
        p += contrib;
        if (std::abs(term) < 1e-12) break;
    }
    return std::min(1.0, std::max(0.0, p));
}

// Same quantity through the eigenfunction expansion
//   (4/pi) sum_{j>=0} ((-1)^j / (2j+1)) exp(-(2j+1)^2 pi^2 / (8 a^2)),
// whose terms decay so fast for small a that it is exact there (and underflows
// cleanly to 0 rather than to noise).
inline double sup_abs_cdf_spectral(double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("sup_abs_cdf_spectral: a must be >= 0");
    if (a == 0.0) return 0.0;
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * a * a);
    double p = 0.0;
    for (int j = 0; j < 2000; ++j) {
        const double m = 2.0 * j + 1.0;
        const double term = std::exp(-m * m * c) / m;
        p += (j % 2 == 0) ? term : -term;
        if (term < 1e-15) break;
    }
    return std::min(1.0, std::max(0.0, 4.0 * std::numbers::inv_pi * p));
}

// Regime dispatch: each expansion where it converges without cancellation.
inline double sup_abs_cdf(double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("sup_abs_cdf: a must be >= 0");
    return a < 0.7 ? sup_abs_cdf_spectral(a) : sup_abs_cdf_reflection(a);
}

// log of P(sup_{u<=1} |B_u| <= a), finite for every a > 0.  For small a the
// spectral expansion gives the exact log directly,
//   log(4/pi) - c + log1p(-e^{-8c}/3 + e^{-24c}/5),  c = pi^2/(8 a^2),
// with the dropped tail below 1e-17 once a < 0.7.
inline double sup_abs_cdf_log(double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("sup_abs_cdf_log: a must be >= 0");
    if (a == 0.0) return -std::numeric_limits<double>::infinity();
    if (a < 0.7) {
        const double c = std::numbers::pi * std::numbers::pi / (8.0 * a * a);
        return std::log(4.0 * std::numbers::inv_pi) - c +
               std::log1p(-std::exp(-8.0 * c) / 3.0 + std::exp(-24.0 * c) / 5.0);
    }
    return std::log(sup_abs_cdf_reflection(a));
}

// P(|B_u| < a for all u in [0, dt] | B_0 = x, B_dt = y) for a standard
// Brownian bridge, via the double-barrier image series.  Requires |x| < a and
// |y| < a; the caller handles endpoints outside the band (probability 0).
inline double bridge_two_sided_survival(double x, double y, double a, double dt) {
    if (!(a > 0.0) || !(dt > 0.0))
        throw std::invalid_argument("bridge_two_sided_survival: a and dt must be positive");
    if (std::abs(x) >= a || std::abs(y) >= a) return 0.0;
    const double w = 2.0 * a;       // barrier-to-barrier width
    const double xl = x + a;        // distance of start above the lower barrier
    const double yl = y + a;        // distance of end above the lower barrier
    const double inv = 2.0 / dt;
    double p = 0.0;
    for (int k = 0; k < 64; ++k) {
        double contrib = 0.0;
        if (k == 0) {
            contrib = 1.0 - std::exp(-inv * xl * yl);
        } else {
            const double kw = k * w;
            contrib += std::exp(-inv * kw * (kw + y - x)) - std::exp(-inv * (kw + xl) * (kw + yl));
            contrib += std::exp(-inv * kw * (kw - y + x)) - std::exp(-inv * (kw - xl) * (kw - yl));
        }
        p += contrib;
        if (k > 0 && std::abs(contrib) < 1e-16) break;
    }
    return std::min(1.0, std::max(0.0, p));
}

}  // namespace voltube::brownian
