#pragma once

// Black machinery on the unit-forward measure: undiscounted call pricing,
// implied-vol inversion, the moment-formula transform lee_phi, and wing-slope
// fits of T sigma^2 versus |k| on the outermost smile points.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "voltube/common.hpp"
#include "voltube/simulate.hpp"

namespace voltube {

// Undiscounted Black call on the forward: F0 (Phi(d1) - e^k Phi(d2)) with
// d_{1,2} = (-k +- sigma^2 T / 2) / (sigma sqrt(T)); sigma = 0 gives intrinsic.
inline double bs_call(double F0, double k, double T, double sigma) {
    if (!(F0 > 0.0) || !(T > 0.0)) throw std::invalid_argument("bs_call: need F0 > 0, T > 0");
    if (sigma < 0.0) throw std::invalid_argument("bs_call: negative sigma");
    if (sigma == 0.0) return std::max(F0 * (1.0 - std::exp(k)), 0.0);
    const double s = sigma * std::sqrt(T);
    const double d1 = (-k + 0.5 * s * s) / s;
    const double d2 = d1 - s;
    return F0 * (norm_cdf(d1) - std::exp(k) * norm_cdf(d2));
}

inline double bs_vega(double F0, double k, double T, double sigma) {
    const double s = sigma * std::sqrt(T);
    const double d1 = (-k + 0.5 * s * s) / s;
    return F0 * norm_pdf(d1) * std::sqrt(T);
}

// Unique non-negative sigma with bs_call(F0, k, T, sigma) = price.  Bisection
// to 1e-10 with one Newton polish; prices outside [intrinsic, F0) are
// arbitrage and rejected.
inline double implied_vol(double price, double F0, double k, double T) {
    if (!(F0 > 0.0) || !(T > 0.0)) throw std::invalid_argument("implied_vol: need F0 > 0, T > 0");
    const double intrinsic = std::max(F0 * (1.0 - std::exp(k)), 0.0);
    if (!(price >= intrinsic) || !(price < F0))
        throw std::invalid_argument("implied_vol: price outside the no-arbitrage band");
    if (price == intrinsic) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (bs_call(F0, k, T, hi) < price) {
        hi *= 2.0;
        if (hi > 1e6) throw numeric_error("implied_vol: bracket search failed");
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (bs_call(F0, k, T, mid) < price ? lo : hi) = mid;
    }
    double sigma = 0.5 * (lo + hi);
    const double vega = bs_vega(F0, k, T, sigma);
    if (vega > 1e-12) {
        const double polished = sigma - (bs_call(F0, k, T, sigma) - price) / vega;
        if (polished > 0.0 && std::isfinite(polished)) sigma = polished;
    }
    return sigma;
}

// Moment-formula transform phi(x) = 2 - 4 (sqrt(x^2 + x) - x), mapping a
// critical moment to a wing-slope ceiling; phi(0) = 2, phi(inf) = 0.
// Rationalizing twice gives the cancellation-free 2x / (sqrt(x^2 + x) + x)^2.
inline double lee_phi(double x) {
    if (x < 0.0) throw std::invalid_argument("lee_phi: x must be >= 0");
    if (std::isinf(x)) return 0.0;
    if (x == 0.0) return 2.0;
    if (x > 1e150) return 0.5 / x;  // x^2 would overflow; asymptote exact here
    const double s = std::sqrt(x * x + x) + x;
    return 2.0 * x / (s * s);
}

enum class SmileSource { mc, oracle };

struct SmilePoint {
    double k = 0.0;
    double T = 0.0;
    double implied_vol = 0.0;
    SmileSource source = SmileSource::mc;
};

struct McSmile {
    std::vector<SmilePoint> points;
    std::vector<std::pair<double, std::string>> dropped;  // (k, reason)
};

// MC smile: price each strike as mean((e^{X_T} - e^k)^+) and invert; strikes
// whose MC price falls outside the no-arbitrage band are dropped with a
// recorded reason rather than silently skipped.
inline McSmile smile_from_mc(const PathBatch& batch, const std::vector<double>& strikes) {
    if (batch.n_paths == 0) throw std::invalid_argument("smile_from_mc: empty batch");
    McSmile out;
    for (double k : strikes) {
        const double ek = std::exp(k);
        double sum = 0.0;
        for (std::size_t p = 0; p < batch.n_paths; ++p)
            sum += std::max(std::exp(batch.x(p, batch.n_steps)) - ek, 0.0);
        const double price = sum / static_cast<double>(batch.n_paths);
        const double intrinsic = std::max(1.0 - ek, 0.0);
        if (price == 0.0 && intrinsic == 0.0) {
            out.dropped.emplace_back(k, "zero MC price");
            continue;
        }
        if (price < intrinsic) {
            out.dropped.emplace_back(k, "below intrinsic");
            continue;
        }
        if (price >= 1.0) {
            out.dropped.emplace_back(k, "at or above forward");
            continue;
        }
        out.points.push_back({k, batch.T - batch.t0, implied_vol(price, 1.0, k, batch.T - batch.t0),
                              SmileSource::mc});
    }
    return out;
}

struct WingSlopes {
    double right_slope = 0.0;  // fitted d(T sigma^2)/d|k| on the k > 0 wing
    double left_slope = 0.0;
    LinearFit right_fit;
    LinearFit left_fit;
    double right_window_lo = 0.0, right_window_hi = 0.0;  // |k| fit windows
    double left_window_lo = 0.0, left_window_hi = 0.0;
};

// Fits T sigma(k)^2 against |k| on each wing using the points with
// |k| >= k_min_abs.  An outermost-points fit is robust to MC noise, unlike a
// one-sided derivative at the extreme strike.
inline WingSlopes wing_slopes(const std::vector<SmilePoint>& smile, double k_min_abs) {
    std::vector<double> rk, rv, lk, lv;
    for (const auto& pt : smile) {
        if (std::abs(pt.k) < k_min_abs) continue;
        const double tv = pt.T * pt.implied_vol * pt.implied_vol;
        if (pt.k > 0.0) {
            rk.push_back(pt.k);
            rv.push_back(tv);
        } else {
            lk.push_back(-pt.k);
            lv.push_back(tv);
        }
    }
    if (rk.size() < 3 || lk.size() < 3)
        throw std::invalid_argument("wing_slopes: need >= 3 points per wing beyond k_min_abs");
    WingSlopes out;
    out.right_fit = fit_line(rk, rv);
    out.left_fit = fit_line(lk, lv);
    out.right_slope = out.right_fit.slope;
    out.left_slope = out.left_fit.slope;
    out.right_window_lo = *std::min_element(rk.begin(), rk.end());
    out.right_window_hi = *std::max_element(rk.begin(), rk.end());
    out.left_window_lo = *std::min_element(lk.begin(), lk.end());
    out.left_window_hi = *std::max_element(lk.begin(), lk.end());
    return out;
}

}  // namespace voltube
