#pragma once

// Fourier-side ground truth for the Heston model (the one member of the model
// class with semi-closed transforms): characteristic function in the
// branch-stable formulation, moment explosion times and critical moments,
// tail probabilities and densities by inversion, and damped call/put pricing.
//
// Plain Gil-Pelaez inversion loses all relative accuracy once the target
// probability drops below the quadrature's absolute error, so deep-tail
// quantities use a saddle-point tilt: the contour is shifted to Re z = p with
// p chosen so the integrand peaks at the target, and the large factor e^{-py}
// is carried outside the integral.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "voltube/common.hpp"

namespace voltube {

using cplx = std::complex<double>;

struct HestonParams {
    double kappa = 1.0;  // mean-reversion speed
    double theta = 0.04; // long-run variance
    double xi = 0.5;     // vol-of-vol
    double rho = 0.0;    // correlation in (-1, 1)
    double V0 = 0.04;    // initial variance
    double T = 1.0;      // horizon

    void check() const {
        if (!(kappa > 0.0) || !(theta > 0.0) || !(xi > 0.0) || !(V0 > 0.0) || !(T > 0.0))
            throw std::invalid_argument("HestonParams: kappa, theta, xi, V0, T must be positive");
        if (!(rho > -1.0 && rho < 1.0))
            throw std::invalid_argument("HestonParams: rho must lie in (-1, 1)");
    }
};

// E[X_T] in closed form: X has drift -V/2 and E[V_t] = theta + (V0-theta)e^{-kappa t}.
inline double heston_mean(const HestonParams& p) {
    return -0.5 * (p.theta * p.T + (p.V0 - p.theta) * (1.0 - std::exp(-p.kappa * p.T)) / p.kappa);
}

// Explosion time of E[e^{z X_t}]: the Riccati solution psi' = k + b psi + (xi^2/2) psi^2
// starting at 0 blows up at
//   T*(z) = infinity                                   if k <= 0, or D >= 0 with b < 0,
//   (1/sqrt(D)) ln((b+sqrt(D))/(b-sqrt(D)))            if k > 0, D >= 0, b > 0,
//   (2/sqrt(-D)) (pi/2 - atan(b/sqrt(-D)))             if k > 0, D < 0,
// with k = z(z-1)/2, b = rho xi z - kappa, D = b^2 - 2 xi^2 k.
inline double explosion_time(const HestonParams& p, double z) {
    const double k = 0.5 * z * (z - 1.0);
    if (k <= 0.0) return std::numeric_limits<double>::infinity();
    const double b = p.rho * p.xi * z - p.kappa;
    const double D = b * b - 2.0 * p.xi * p.xi * k;
    if (D >= 0.0) {
        if (b < 0.0) return std::numeric_limits<double>::infinity();
        const double s = std::sqrt(D);
        if (b <= s) return std::numeric_limits<double>::infinity();  // numerical guard
        return std::log((b + s) / (b - s)) / s;
    }
    const double s = std::sqrt(-D);
    return 2.0 / s * (std::numbers::pi / 2.0 - std::atan(b / s));
}

struct CriticalMoments {
    double p_star = 0.0;  // sup { p : E[e^{p X_T}] < inf }
    double q_star = 0.0;  // sup { q : E[e^{-q X_T}] < inf }
    bool p_capped = false;
    bool q_capped = false;
};

// Bisection on T*(z) >= T, resolved to 1e-6; values beyond the cap are
// reported as the cap with a flag (the Black-Scholes-like small-xi limit has
// all moments).
inline CriticalMoments critical_moment(const HestonParams& p, double cap = 1e6) {
    p.check();
    const auto solve = [&](auto order_of) {
        double lo = 1.0;  // orders in [0,1] never explode
        double hi = 2.0;
        while (explosion_time(p, order_of(hi)) >= p.T) {
            lo = hi;
            hi *= 2.0;
            if (hi >= cap) return std::make_pair(cap, true);
        }
        while (hi - lo > 1e-6) {
            const double mid = 0.5 * (lo + hi);
            (explosion_time(p, order_of(mid)) >= p.T ? lo : hi) = mid;
        }
        return std::make_pair(0.5 * (lo + hi), false);
    };
    CriticalMoments out;
    std::tie(out.p_star, out.p_capped) = solve([](double m) { return m; });
    std::tie(out.q_star, out.q_capped) = solve([](double m) { return -m; });
    return out;
}

// log E[e^{z X_T}] by the branch-stable ("little trap") Riccati closed form;
// analytic on the strip Re z in (-q_star, p_star).
inline cplx log_mgf(const HestonParams& p, cplx z) {
    const cplx beta = p.kappa - p.rho * p.xi * z;
    const double xi2 = p.xi * p.xi;
    const cplx d = std::sqrt(beta * beta - xi2 * (z * z - z));
    const cplx g = (beta - d) / (beta + d);
    const cplx edt = std::exp(-d * p.T);
    const cplx D = (beta - d) / xi2 * (1.0 - edt) / (1.0 - g * edt);
    const cplx C = p.kappa * p.theta / xi2 *
                   ((beta - d) * p.T - 2.0 * std::log((1.0 - g * edt) / (1.0 - g)));
    return C + D * p.V0;
}

// E[e^{iuX_T}] with an explicit analyticity-strip check on Re(iu).
inline cplx char_fn(const HestonParams& p, cplx u) {
    p.check();
    const cplx z = cplx(0.0, 1.0) * u;
    const double order = z.real();
    if (order != 0.0 && explosion_time(p, order) <= p.T)
        throw std::domain_error("char_fn: argument outside the analyticity strip");
    return std::exp(log_mgf(p, z));
}

// d/dz log E[e^{z X_T}], the closed form differentiated term by term.  No
// logarithm survives differentiation, so the expression is branch-free and
// stable on the whole strip, including the oscillatory region where the
// discriminant under the square root is negative.  (A complex-step derivative
// fails there: the evaluation is genuinely complex even for real z, and the
// step-sized imaginary signal drowns in O(eps) cancellation noise.)
inline double log_mgf_derivative(const HestonParams& p, double z) {
    const cplx zc(z, 0.0);
    const double xi2 = p.xi * p.xi;
    const cplx beta = p.kappa - p.rho * p.xi * zc;
    const cplx bp = -p.rho * p.xi;
    const cplx d = std::sqrt(beta * beta - xi2 * (zc * zc - zc));
    const cplx dp = (2.0 * beta * bp - xi2 * (2.0 * zc - 1.0)) / (2.0 * d);
    const cplx g = (beta - d) / (beta + d);
    const cplx gp = 2.0 * (bp * d - beta * dp) / ((beta + d) * (beta + d));
    const cplx edt = std::exp(-d * p.T);
    const cplx edtp = -p.T * dp * edt;
    const cplx den = 1.0 - g * edt;
    const cplx num = 1.0 - edt;
    const cplx Dp = ((bp - dp) * num / den +
                     (beta - d) * (-edtp * den + num * (gp * edt + g * edtp)) / (den * den)) /
                    xi2;
    const cplx Cp = p.kappa * p.theta / xi2 *
                    ((bp - dp) * p.T + 2.0 * ((gp * edt + g * edtp) / den - gp / (1.0 - g)));
    return (Cp + Dp * p.V0).real();
}

// Solves (log M)'(p) = y on the open moment strip.  (log M)' is increasing
// (log-convexity), so bisection is safe; if y is beyond the reachable range
// the corresponding clamped endpoint is returned (still a valid tilt).
inline double saddle_point(const HestonParams& p, double y) {
    const CriticalMoments cm = critical_moment(p);
    const double margin = 1e-3;
    double lo = -cm.q_star * (1.0 - margin);
    double hi = cm.p_star * (1.0 - margin);
    if (log_mgf_derivative(p, lo) >= y) return lo;
    if (log_mgf_derivative(p, hi) <= y) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (log_mgf_derivative(p, mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

namespace detail {

// Integrates f over [0, infinity) by panel doubling with adaptive
// Gauss-Kronrod on each panel; stops once two consecutive panels contribute
// below tolerance.  Throws numeric_error when the result is not finite.
template <typename F>
double integrate_semi_infinite(F&& f, double abs_tol) {
    using boost::math::quadrature::gauss_kronrod;
    double total = 0.0;
    double a = 0.0;
    double width = 64.0;
    int calm_panels = 0;
    for (int panel = 0; panel < 48; ++panel) {
        const double piece =
            gauss_kronrod<double, 31>::integrate(f, a, a + width, 12, 1e-10);
        total += piece;
        a += width;
        width *= 2.0;
        if (std::abs(piece) < std::max(abs_tol, 1e-13 * std::abs(total))) {
            if (++calm_panels >= 2) break;
        } else {
            calm_panels = 0;
        }
    }
    if (!std::isfinite(total)) throw numeric_error("quadrature diverged");
    return total;
}

}  // namespace detail

// P(X_T > y) by Gil-Pelaez inversion.  Absolute accuracy around 1e-9; for
// probabilities smaller than that use tail_tilted, which is accurate in
// relative terms.
inline double tail(const HestonParams& p, double y) {
    p.check();
    const auto f = [&](double u) {
        if (u == 0.0) return 0.0;  // integrand extends continuously; avoid 0/0
        const cplx phi = std::exp(log_mgf(p, cplx(0.0, u)));  // z = iu
        return (std::exp(cplx(0.0, -u * y)) * phi).imag() / u;
    };
    const double integral = detail::integrate_semi_infinite(f, 1e-12);
    // Gil-Pelaez: F(y) = 1/2 - (1/pi) * integral, so the complement adds it.
    return std::clamp(0.5 + integral / std::numbers::pi, 0.0, 1.0);
}

// P(X_T > y) via a saddle-tilted contour: relative accuracy even at
// probabilities around 1e-30.  For y below the mean the complementary event
// is tilted on the negative side of the strip.
inline double tail_tilted(const HestonParams& p, double y) {
    p.check();
    const double mean = heston_mean(p);
    const bool right = y >= mean;
    double tilt = saddle_point(p, y);
    if (right) {
        tilt = std::max(tilt, 1e-6);
    } else {
        tilt = std::min(tilt, -1e-6);
    }
    const double log_m = log_mgf(p, cplx(tilt, 0.0)).real();
    const auto f = [&](double u) {
        const cplx z(tilt, u);
        const cplx val = std::exp(log_mgf(p, z) - log_m - cplx(0.0, u * y)) / z;
        return val.real();
    };
    const double integral = detail::integrate_semi_infinite(f, 1e-14);
    // P(X > y) = (e^{log M(p) - p y}/pi) * integral for p > 0; for p < 0 the
    // contour sits left of the pole at 0 and the same integral gives -P(X <= y).
    const double scaled = std::exp(log_m - tilt * y) / std::numbers::pi * integral;
    const double prob = right ? scaled : 1.0 + scaled;
    return std::clamp(prob, 0.0, 1.0);
}

struct DensityPoint {
    double y = 0.0;
    double value = 0.0;   // raw inversion output (may be slightly negative)
    bool clipped = false; // true when the raw value was negative
};

// Density of X_T at y by tilted inversion; exact non-negativity is not
// guaranteed by quadrature, so the raw value is reported with a clip flag.
inline DensityPoint density_at(const HestonParams& p, double y) {
    p.check();
    const double tilt = saddle_point(p, y);
    const double log_m = log_mgf(p, cplx(tilt, 0.0)).real();
    const auto f = [&](double u) {
        const cplx val = std::exp(log_mgf(p, cplx(tilt, u)) - log_m - cplx(0.0, u * y));
        return val.real();
    };
    const double integral = detail::integrate_semi_infinite(f, 1e-14);
    DensityPoint out;
    out.y = y;
    out.value = std::exp(log_m - tilt * y) / std::numbers::pi * integral;
    out.clipped = out.value < 0.0;
    return out;
}

// Plain Fourier inversion over a grid (kept alongside the tilted version as an
// independent route; absolute accuracy only).
inline std::vector<DensityPoint> density(const HestonParams& p, const std::vector<double>& y_grid) {
    p.check();
    if (y_grid.empty()) throw std::invalid_argument("density: empty grid");
    std::vector<DensityPoint> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        const auto f = [&](double u) {
            const cplx phi = std::exp(log_mgf(p, cplx(0.0, u)));
            return (std::exp(cplx(0.0, -u * y)) * phi).real();
        };
        const double integral = detail::integrate_semi_infinite(f, 1e-12);
        DensityPoint d;
        d.y = y;
        d.value = integral / std::numbers::pi;
        d.clipped = d.value < 0.0;
        out.push_back(d);
    }
    return out;
}

// Undiscounted call E[(e^{X_T} - e^k)^+] on the unit forward by damped
// inversion on the contour Re z = zc:
//   zc > 1   -> call;   zc < 0 -> put (both poles crossed), call restored by
//   parity C = P + 1 - e^k (valid when e^X is a true martingale).
// The contour is placed near the pricing saddle, clamped inside the strip.
inline double call_price(const HestonParams& p, double k) {
    p.check();
    const CriticalMoments cm = critical_moment(p);
    const bool use_put = k < 0.0;  // better-conditioned side for low strikes
    double zc;
    if (use_put) {
        zc = std::clamp(saddle_point(p, k), -0.9 * cm.q_star, -0.02);
    } else {
        const double z_hi = 1.0 + 0.9 * (cm.p_star - 1.0);
        zc = std::clamp(saddle_point(p, k), std::min(1.02, z_hi), z_hi);
    }
    const double log_m = log_mgf(p, cplx(zc, 0.0)).real();
    const auto f = [&](double u) {
        const cplx z(zc, u);
        const cplx val = std::exp(log_mgf(p, z) - log_m - (z - 1.0) * k) / (z * (z - 1.0));
        return val.real();
    };
    const double integral = detail::integrate_semi_infinite(f, 1e-14);
    const double body = std::exp(log_m) / std::numbers::pi * integral;
    if (use_put) {
        const double put = body;
        return std::max(put + 1.0 - std::exp(k), 0.0);
    }
    return std::max(body, 0.0);
}

}  // namespace voltube
