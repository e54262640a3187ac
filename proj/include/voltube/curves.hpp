#pragma once

// Optimal tube geometry and the certified lower bounds built on it.
//
// For a target terminal log-price y the model admits an explicit optimal
// variance path v~(t) = V0 u(t)^2 where u solves u'' = u/4 with u(0) = 1,
// u(T) = sqrt(ybar/V0), ybar = |y| + V0.  Around (x~, v~) a moving ball of
// radius R~(t) = 0.5 sqrt(min(V0,1) v~(t)) defines the tube whose staying
// probability is bounded below by exp of an explicit (astronomically large,
// log-domain) exponent.  This header exposes the curves, the full constant
// chain, and the tube / terminal-tail / small-ball bound formulas.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "voltube/brownian.hpp"
#include "voltube/common.hpp"
#include "voltube/model.hpp"

namespace voltube {

// psi(r) = r^-6 (ln(1/r) + 1) on (0, 1]; psi(1) = 1.
inline double psi(double r) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("psi: r must lie in (0, 1]");
    const double lg = std::log(1.0 / r);
    return std::pow(r, -6.0) * (lg + 1.0);
}

inline double log_psi(double r) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("log_psi: r must lie in (0, 1]");
    return -6.0 * std::log(r) + std::log(std::log(1.0 / r) + 1.0);
}

// Thresholds on |y| below which the certified bounds do not apply:
//  - tube_bound: geometric condition V0 (1 + 2 sinh(T/2))^2
//  - tail_extra: additional terminal-tail condition 2 (V0 v 1)^2 (1 + V0)
struct YThreshold {
    double tube_bound = 0.0;
    double tail_extra = 0.0;
};

inline YThreshold y_threshold(double V0, double T) {
    if (!(V0 > 0.0) || !(T > 0.0))
        throw std::invalid_argument("y_threshold: V0 and T must be positive");
    const double s = 1.0 + 2.0 * std::sinh(T / 2.0);
    const double v1 = std::max(V0, 1.0);
    return {V0 * s * s, 2.0 * v1 * v1 * (1.0 + V0)};
}

// Optimal curve triple on a uniform grid, plus closed-form off-grid access.
struct CurveTriple {
    double y = 0.0;      // signed target
    double y_bar = 0.0;  // |y| + V0
    double V0 = 0.0;
    double T = 0.0;
    std::vector<double> grid;     // t_0 = 0 .. t_N = T, uniform
    std::vector<double> u;        // u(t_k)
    std::vector<double> u_prime;  // u'(t_k)
    std::vector<double> x_tilde;  // sign(y) (v~ - V0)
    std::vector<double> v_tilde;  // V0 u^2
    std::vector<double> r_tilde;  // 0.5 sqrt(min(V0,1) v~)

    double u_at(double t) const {
        const double sh = std::sinh(T / 2.0);
        const double phi = std::sinh(t / 2.0) / sh;
        return std::sqrt(y_bar / V0) * phi - std::exp(-T / 2.0) * phi + std::exp(-t / 2.0);
    }
    double u_prime_at(double t) const {
        const double sh = std::sinh(T / 2.0);
        return (std::sqrt(y_bar / V0) - std::exp(-T / 2.0)) * std::cosh(t / 2.0) / (2.0 * sh) -
               0.5 * std::exp(-t / 2.0);
    }
    double v_tilde_at(double t) const {
        const double ut = u_at(t);
        return V0 * ut * ut;
    }
    double v_tilde_prime_at(double t) const { return 2.0 * V0 * u_at(t) * u_prime_at(t); }
    double x_tilde_at(double t) const {
        return (y < 0 ? -1.0 : 1.0) * (v_tilde_at(t) - V0);
    }
    double r_tilde_at(double t) const {
        return 0.5 * std::sqrt(std::min(V0, 1.0) * v_tilde_at(t));
    }
};

namespace detail {

// Curve construction without the theorem's |y| threshold; the checked entry
// point below enforces it.  Requires only |y| > 0 so ybar > V0.
inline CurveTriple make_curve_unchecked(double y, double V0, double T, std::size_t steps) {
    if (steps < 2) throw std::invalid_argument("optimal_curves: need at least 2 steps");
    if (!(V0 > 0.0) || !(T > 0.0))
        throw std::invalid_argument("optimal_curves: V0 and T must be positive");
    if (y == 0.0) throw std::invalid_argument("optimal_curves: y must be nonzero");
    CurveTriple c;
    c.y = y;
    c.V0 = V0;
    c.T = T;
    c.y_bar = std::abs(y) + V0;
    const std::size_t n = steps;
    c.grid.resize(n + 1);
    c.u.resize(n + 1);
    c.u_prime.resize(n + 1);
    c.x_tilde.resize(n + 1);
    c.v_tilde.resize(n + 1);
    c.r_tilde.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = T * static_cast<double>(k) / static_cast<double>(n);
        c.grid[k] = t;
        c.u[k] = c.u_at(t);
        c.u_prime[k] = c.u_prime_at(t);
        c.v_tilde[k] = V0 * c.u[k] * c.u[k];
        c.x_tilde[k] = (y < 0 ? -1.0 : 1.0) * (c.v_tilde[k] - V0);
        c.r_tilde[k] = 0.5 * std::sqrt(std::min(V0, 1.0) * c.v_tilde[k]);
    }
    // Pin the endpoints to their exact boundary values.
    c.u[0] = 1.0;
    c.u[n] = std::sqrt(c.y_bar / V0);
    c.v_tilde[0] = V0;
    c.v_tilde[n] = c.y_bar;
    c.x_tilde[0] = 0.0;
    c.x_tilde[n] = y;
    return c;
}

}  // namespace detail

// Checked construction: |y| must exceed the tube-bound threshold, which is
// exactly the hypothesis under which the tube estimate is certified (and under
// which u' >= 1/4, making v~ strictly increasing).
inline CurveTriple optimal_curves(double y, const ModelSpec& spec, std::size_t steps) {
    const auto thr = y_threshold(spec.V0, spec.T);
    if (!(std::abs(y) > thr.tube_bound))
        throw std::invalid_argument("optimal_curves: |y| below the tube-bound threshold");
    return detail::make_curve_unchecked(y, spec.V0, spec.T, steps);
}

// Options for the constant chain.  C2 (moment-increment constant) and L
// (Lipschitz aggregate) are not pinned numerically by the derivation; C2
// defaults to 1 and L to its explicit envelope, and both are echoed in every
// report.  c_star_floor is the floor inside max(floor, ...) defining c*.
struct BoundOptions {
    double C2 = 1.0;
    std::optional<double> L_override;
    double c_star_floor = 1.0;
    double mu = 4.0;  // moment order in the q_mu constant
};

// Full constant chain.  Exponent-sized members are stored as natural logs;
// c_T, d_T, e_T in particular satisfy log(c_T) ~ c* T^2 which can reach 1e62.
struct BoundConstants {
    double R = 0.5;             // tube-to-curve ratio used throughout
    double c = 0.0;             // drift/diffusion envelope along the tube
    double lambda = 0.0;        // ellipticity floor factor (times rho_bar^2 v)
    double gamma = 0.0;         // ellipticity ceiling factor (times v)
    double C2 = 1.0;            // configured increment-moment constant
    double L = 0.0;             // Lipschitz aggregate (configurable)
    double L_T = 0.0;           // L e^{C2 T^2}
    double Gamma_T = 0.0;       // max(1, 2(c^2 + L_T) / ((V0 ^ 1) rho_bar^2 lambda))
    double Gamma = 0.0;         // rho_bar^2 Gamma_T e^{-C2 T^2}
    double mu = 4.0;
    double log_q_mu = 0.0;      // log(8^12 e^2 mu^73)
    double phi = 0.0;           // rho_bar^2 lambda / gamma, in (0, 1]
    double log_Q = 0.0;         // log of (q_mu/phi^2) ln(q_mu/phi)
    double c_star = 0.0;        // max(c_star_floor, 4(20 V0 + 1) Gamma (gamma^2 q_mu/lambda^2) ln(gamma q_mu/lambda))
    double log_c_star = 0.0;
    double log_c_T = 0.0;       // log of c* (1/T + 1) e^{c* T^2}
    double log_d_T = 0.0;       // log of 2 c* (1/T^2 + 1) e^{(c*+1) T^2}
    double log_e_T = 0.0;       // log of 136 c* (1/T^2 + 1) e^{(c*+1) T}
    double log_ratio_d_c = 0.0; // log(d_T / c_T), formed analytically
    double log_ratio_e_c = 0.0; // log(e_T / c_T), formed analytically
    double rho_bar = 0.0;
    double V0 = 0.0;
    double T = 0.0;
    double h = std::numeric_limits<double>::quiet_NaN();  // sqrt(V0/ybar) tanh(T/2); set when built with a target y
    double epsilon0 = 0.0;      // correlation-mixing threshold in (0, 1]
    double q_sup = 0.0;         // P(sup_{u<=1}|b_u| <= epsilon0/(4 sqrt2 sigma_hi)); may underflow
    double log_q_sup = 0.0;     // always-finite log of q_sup
    double delta0 = 0.0;        // min(epsilon0^2 q_sup / (160 K^2), T/2)
};

inline double log_q_mu_of(double mu) {
    // log(8^12) + 2 + 73 log(mu)
    return 36.0 * std::numbers::ln2 + 2.0 + 73.0 * std::log(mu);
}

// Partial chain: the model envelope constants (c, lambda, gamma, L, L_T).
inline BoundConstants tech_constants(const ModelSpec& spec, const BoundOptions& opt = {}) {
    spec.check();
    if (!(opt.C2 > 0.0)) throw std::invalid_argument("tech_constants: C2 must be positive");
    if (!(opt.c_star_floor >= 1.0))
        throw std::invalid_argument("tech_constants: c_star floor must be >= 1");
    BoundConstants b;
    const double R = b.R;
    const double V0 = spec.V0;
    const double eh = spec.eta_hi, el = spec.eta_lo;
    const double sh = spec.sigma_hi, sl = spec.sigma_lo;

    b.V0 = V0;
    b.T = spec.T;
    b.rho_bar = spec.rho_bar();
    b.C2 = opt.C2;
    b.mu = opt.mu;
    b.c = 2.0 * (0.5 * eh * eh + spec.K + 2.0 * eh + sh) * (1.0 + R) * std::max(1.0, V0) / V0;
    b.lambda = el * el * sl * sl / (2.0 * (eh * eh + sh * sh)) * (1.0 - R) / (1.0 + R);
    b.gamma = (eh * eh + sh * sh) * (1.0 + R);
    b.L = opt.L_override.value_or(
        opt.C2 * (8.0 * (1.0 + R) * spec.K * spec.K * std::max(1.0, V0) / V0 +
                  std::max(eh * eh, sh * sh) / ((1.0 - R) * V0 * V0)));
    b.L_T = b.L * std::exp(opt.C2 * spec.T * spec.T);
    return b;
}

// Full chain; when a target y is supplied the regularity window h is filled in.
inline BoundConstants bound_constants(const ModelSpec& spec, const BoundOptions& opt = {},
                                      std::optional<double> y = std::nullopt) {
    BoundConstants b = tech_constants(spec, opt);
    const double T = spec.T;
    const double rb2 = b.rho_bar * b.rho_bar;

    b.Gamma_T = std::max(1.0, 2.0 * (b.c * b.c + b.L_T) / (std::min(spec.V0, 1.0) * rb2 * b.lambda));
    b.Gamma = rb2 * b.Gamma_T * std::exp(-opt.C2 * T * T);
    b.log_q_mu = log_q_mu_of(opt.mu);
    b.phi = rb2 * b.lambda / b.gamma;
    b.log_Q = b.log_q_mu - 2.0 * std::log(b.phi) + std::log(b.log_q_mu - std::log(b.phi));

    const double log_lead = std::log(4.0) + std::log(20.0 * spec.V0 + 1.0) + std::log(b.Gamma) +
                            2.0 * (std::log(b.gamma) - std::log(b.lambda)) + b.log_q_mu +
                            std::log(std::log(b.gamma) + b.log_q_mu - std::log(b.lambda));
    b.log_c_star = std::max(std::log(opt.c_star_floor), log_lead);
    b.c_star = std::exp(b.log_c_star);
    if (!std::isfinite(b.c_star))
        throw numeric_error("bound_constants: c* overflows double range for these parameters");

    b.log_c_T = b.log_c_star + std::log(1.0 / T + 1.0) + b.c_star * T * T;
    b.log_d_T = std::numbers::ln2 + b.log_c_star + std::log(1.0 / (T * T) + 1.0) +
                (b.c_star + 1.0) * T * T;
    b.log_e_T = std::log(136.0) + b.log_c_star + std::log(1.0 / (T * T) + 1.0) +
                (b.c_star + 1.0) * T;
    b.log_ratio_d_c =
        std::numbers::ln2 + std::log((1.0 / (T * T) + 1.0) / (1.0 / T + 1.0)) + T * T;
    b.log_ratio_e_c = std::log(136.0 * (1.0 / (T * T) + 1.0) / (1.0 / T + 1.0)) +
                      b.c_star * (T - T * T) + T;

    if (y) {
        const double ybar = std::abs(*y) + spec.V0;
        b.h = std::sqrt(spec.V0 / ybar) * std::tanh(T / 2.0);
    }

    // Correlation-mixing threshold and the associated sup-probability window.
    if (spec.rho == 0.0) {
        b.epsilon0 = 1.0;
    } else {
        b.epsilon0 = std::min(
            b.rho_bar * spec.eta_lo * spec.sigma_lo /
                (4.0 * std::numbers::sqrt2 * std::abs(spec.rho) * spec.eta_hi),
            1.0);
    }
    const double a = b.epsilon0 / (4.0 * std::numbers::sqrt2 * spec.sigma_hi);
    b.q_sup = brownian::sup_abs_cdf(a);
    b.log_q_sup = brownian::sup_abs_cdf_log(a);
    b.delta0 = std::min(b.epsilon0 * b.epsilon0 * b.q_sup / (160.0 * spec.K * spec.K), T / 2.0);
    return b;
}

// Correlation-mixing threshold, sup-probability window and time lower bound,
// as a standalone triple (also available on BoundConstants).
struct EpsilonDeltaQ {
    double epsilon0 = 0.0;
    double delta0 = 0.0;
    double q_sup = 0.0;
    double log_q_sup = 0.0;
};

inline EpsilonDeltaQ epsilon_delta_q(const ModelSpec& spec) {
    const BoundConstants b = bound_constants(spec);
    return {b.epsilon0, b.delta0, b.q_sup, b.log_q_sup};
}

// Integrand of the tube exponent: at time t along the curve,
//   F(t) = 1/h + ((x~')^2 + (v~')^2) / (rho_bar^2 lambda v~)
//        + 2 (c^2 v~^2 + L_T v~) (1/(rho_bar^2 lambda v~) + 1/R~^2).
inline double rate_function(const CurveTriple& curve, const BoundConstants& consts,
                            double rho_bar, double t) {
    if (!(t >= 0.0 && t <= curve.T)) throw std::invalid_argument("rate_function: t outside [0, T]");
    const double h = std::sqrt(curve.V0 / curve.y_bar) * std::tanh(curve.T / 2.0);
    const double v = curve.v_tilde_at(t);
    const double vp = curve.v_tilde_prime_at(t);
    const double r = curve.r_tilde_at(t);
    const double rb2 = rho_bar * rho_bar;
    const double ell = rb2 * consts.lambda * v;  // ellipticity floor at the curve point
    return 1.0 / h + 2.0 * vp * vp / ell +
           2.0 * (consts.c * consts.c * v * v + consts.L_T * v) * (1.0 / ell + 1.0 / (r * r));
}

// Direct tube exponent: -Q(mu) (1 + integral_0^T F dt), trapezoid on the curve grid.
inline LogBound raw_tube_log_bound(const CurveTriple& curve, const BoundConstants& consts,
                                   double rho_bar) {
    const std::size_t n = curve.grid.size();
    if (n < 2) throw std::invalid_argument("raw_tube_log_bound: curve grid too small");
    double integral = 0.0;
    double prev = rate_function(curve, consts, rho_bar, curve.grid[0]);
    for (std::size_t k = 1; k < n; ++k) {
        const double cur = rate_function(curve, consts, rho_bar, curve.grid[k]);
        integral += 0.5 * (prev + cur) * (curve.grid[k] - curve.grid[k - 1]);
        prev = cur;
    }
    return {consts.log_Q, std::log1p(integral)};
}

// Headline tube bound: P(stay in tube) >= exp(-c_T psi(rho_bar) |y|).
inline LogBound theorem_log_bound(double y, const ModelSpec& spec, const BoundOptions& opt = {}) {
    const auto thr = y_threshold(spec.V0, spec.T);
    if (!(std::abs(y) > thr.tube_bound))
        throw std::invalid_argument("theorem_log_bound: |y| below the tube-bound threshold");
    const BoundConstants b = bound_constants(spec, opt, y);
    return {b.log_c_T, log_psi(spec.rho_bar()) + std::log(std::abs(y))};
}

// Terminal-tail bound P(X_T > y) >= exp(-c_T psi(rho_bar) y) for y above both
// thresholds, together with the induced moment ceiling and wing-slope floors:
// E[e^{p X_T}] diverges-protection ceiling p <= c_T psi(rho_bar) and the pair
// (lee_phi(c_T psi - 1), lee_phi(c_T psi)) bounding the implied-vol wings away
// from zero.  The ceiling and floors are reported in log-domain.
struct TailBound {
    LogBound bound;
    double log_p_ceiling = 0.0;     // log(c_T psi(rho_bar))
    double log_right_floor = 0.0;   // log lee_phi(c_T psi - 1)
    double log_left_floor = 0.0;    // log lee_phi(c_T psi)
};

namespace detail {
// log of lee_phi(x) = 2 - 4 (sqrt(x^2 + x) - x) given log(x), for x > 0.
// Rationalizing twice gives the cancellation-free equivalent
//   lee_phi(x) = 2x / (sqrt(x^2 + x) + x)^2,
// whose log is  ln2 - log_x - 2 log1p(sqrt(1 + 1/x)); the last term tends to
// 2 ln2 as x grows, so the formula holds for arbitrarily large log_x (1/x
// simply underflows to 0 and the 1/(2x) asymptote emerges exactly).
inline double log_lee_phi_from_log(double log_x) {
    if (log_x < -700.0) return std::numbers::ln2;  // 1/x would overflow; phi(0+) = 2
    const double inv_x = std::exp(-log_x);
    return std::numbers::ln2 - log_x - 2.0 * std::log1p(std::sqrt(1.0 + inv_x));
}
}  // namespace detail

inline TailBound cdf_tail_log_bound(double y, const ModelSpec& spec, const BoundOptions& opt = {}) {
    const auto thr = y_threshold(spec.V0, spec.T);
    if (!(y > std::max(thr.tube_bound, thr.tail_extra)))
        throw std::invalid_argument("cdf_tail_log_bound: y below the terminal-tail threshold");
    const BoundConstants b = bound_constants(spec, opt, y);
    const double lp = log_psi(spec.rho_bar());
    TailBound out;
    out.bound = {b.log_c_T, lp + std::log(y)};
    out.log_p_ceiling = b.log_c_T + lp;
    // Right wing floor is lee_phi(ceiling - 1); beyond the asymptotic switch the
    // -1 is below double resolution anyway.
    out.log_right_floor =
        (out.log_p_ceiling > 18.0)
            ? detail::log_lee_phi_from_log(out.log_p_ceiling)
            : detail::log_lee_phi_from_log(std::log(std::exp(out.log_p_ceiling) - 1.0));
    out.log_left_floor = detail::log_lee_phi_from_log(out.log_p_ceiling);
    return out;
}

// Small-ball bound around (y, ybar) with the nested radius family
// R^(j) = (sqrt|y|)^(1-j):  P >= exp(-(j+1) d_T psi(rho_bar) |y|).
// The chain decomposition behind it is exposed for identity checks: j steps of
// length delta_j = T / (2 |y|^j), each contributing a per-step exponent
// -2 c_T psi(rho_bar) (1/T + T) |y|, plus one terminal time-slice contributing
// -2 c_T psi(rho_bar) (1/T + 1) |y|.
struct SmallBallChain {
    double radius = 0.0;   // R^(j)
    double delta_j = 0.0;  // chain step length
    std::vector<double> knots;            // t^j_0 = T - j delta_j, ..., t^j_j = T
    LogBound per_step;                    // exponent of one chain step
    LogBound time_slice;                  // exponent of the terminal slice
    LogBound total;                       // the stated bound -(j+1) d_T psi |y|
};

inline SmallBallChain small_ball_log_bound(double y, int j, const ModelSpec& spec,
                                           const BoundOptions& opt = {}) {
    if (j < 0) throw std::invalid_argument("small_ball_log_bound: j must be >= 0");
    const auto thr = y_threshold(spec.V0, spec.T);
    const double need = std::max({thr.tube_bound, 16.0, thr.tail_extra});
    if (!(std::abs(y) > need))
        throw std::invalid_argument("small_ball_log_bound: |y| below the small-ball threshold");
    const BoundConstants b = bound_constants(spec, opt, y);
    const double ay = std::abs(y);
    const double lp = log_psi(spec.rho_bar());
    const double T = spec.T;
    SmallBallChain out;
    out.radius = std::pow(std::sqrt(ay), 1.0 - j);
    out.delta_j = T / (2.0 * std::pow(ay, j));
    out.knots.resize(static_cast<std::size_t>(j) + 1);
    for (int k = 0; k <= j; ++k) {
        out.knots[static_cast<std::size_t>(k)] = T - (j - k) * out.delta_j;
    }
    out.per_step = {b.log_c_T, std::numbers::ln2 + std::log(1.0 / T + T) + lp + std::log(ay)};
    out.time_slice = {b.log_c_T, std::numbers::ln2 + std::log(1.0 / T + 1.0) + lp + std::log(ay)};
    out.total = {b.log_d_T, std::log(static_cast<double>(j) + 1.0) + lp + std::log(ay)};
    return out;
}

// Transition bound for one tube segment: starting within R1 of the curve at
// time t, the probability of ending within R2 at time s is at least
// exp(-c_T psi(rho_bar) (R1^2/((s-t)|y|) + |y|^2 (s-t)/R2^2)).
inline LogBound segment_log_bound(double y, double R1, double R2, double t, double s,
                                  const ModelSpec& spec, const BoundOptions& opt = {}) {
    const double ay = std::abs(y);
    if (!(ay > 16.0)) throw std::invalid_argument("segment_log_bound: |y| must exceed 16");
    if (!(R2 > 0.0 && R2 <= R1 && R1 <= std::sqrt(ay)))
        throw std::invalid_argument("segment_log_bound: need 0 < R2 <= R1 <= sqrt(|y|)");
    if (!(t >= 0.0 && t < s && s <= spec.T))
        throw std::invalid_argument("segment_log_bound: need 0 <= t < s <= T");
    const BoundConstants b = bound_constants(spec, opt, y);
    const double dt = s - t;
    const double expr = R1 * R1 / (dt * ay) + ay * ay * dt / (R2 * R2);
    return {b.log_c_T, log_psi(spec.rho_bar()) + std::log(expr)};
}

// Density-bound constants.  The bound f(y) >= exp(-e_T psi(rho_bar)^2 ybar) / M_T
// involves a normalization M_T whose ingredients (universal constants from the
// conditional-density estimate) are not computable within this library; M_T is
// produced only when the caller supplies those placeholder values explicitly.
struct DensityPlaceholders {
    double C_star = 0.0;  // universal envelope constant
    double q_star = 0.0;  // universal exponent (unused in M_T but part of the estimate)
    double l_star = 0.0;  // dyadic depth constant
    double c_p = 0.0;     // increment-moment constant at order p
    double p = 1.0;       // moment order
};

struct DensityConstants {
    double log_e_T = 0.0;
    double log_ratio_e_c = 0.0;
    double epsilon0 = 0.0;
    double delta0 = 0.0;
    std::optional<double> log_M_T;  // present only when placeholders were supplied
};

// e_T evaluated from an explicit c* (for fast formula-level checks).
inline double log_e_T_from(double c_star, double T) {
    if (!(c_star >= 1.0) || !(T > 0.0))
        throw std::invalid_argument("log_e_T_from: need c* >= 1 and T > 0");
    return std::log(136.0) + std::log(c_star) + std::log(1.0 / (T * T) + 1.0) +
           (c_star + 1.0) * T;
}

inline DensityConstants density_constants(
    const ModelSpec& spec, const BoundOptions& opt = {},
    std::optional<DensityPlaceholders> placeholders = std::nullopt) {
    const BoundConstants b = bound_constants(spec, opt);
    DensityConstants d;
    d.log_e_T = b.log_e_T;
    d.log_ratio_e_c = b.log_ratio_e_c;
    d.epsilon0 = b.epsilon0;
    d.delta0 = b.delta0;
    if (placeholders) {
        const auto& ph = *placeholders;
        if (!(ph.C_star > 0.0 && ph.l_star >= 0.0 && ph.c_p > 0.0 && ph.p >= 1.0))
            throw std::invalid_argument("density_constants: invalid placeholder values");
        // Theta_T = rho_bar eta_lo^2 2^{-l*-5/2} / (sqrt(pi e) eta_hi C* c_p) e^{-2 c_p T^p},
        // M_T = 2 / (epsilon0 rho_bar eta_lo sqrt(delta0) Theta_T); assembled in logs.
        const double rb = spec.rho_bar();
        const double log_theta = std::log(rb) + 2.0 * std::log(spec.eta_lo) -
                                 (ph.l_star + 2.5) * std::numbers::ln2 -
                                 0.5 * std::log(std::numbers::pi * std::numbers::e) -
                                 std::log(spec.eta_hi) - std::log(ph.C_star) - std::log(ph.c_p) -
                                 2.0 * ph.c_p * std::pow(spec.T, ph.p);
        // delta0 re-derived in log form: the double field may underflow to 0
        // (q_sup is a sup-probability that can be astronomically small), but
        // log_q_sup is always finite, so log M_T stays representable.
        const double log_delta0 =
            std::min(2.0 * std::log(b.epsilon0) + b.log_q_sup -
                         std::log(160.0 * spec.K * spec.K),
                     std::log(spec.T / 2.0));
        d.log_M_T = std::numbers::ln2 - std::log(d.epsilon0) - std::log(rb) -
                    std::log(spec.eta_lo) - 0.5 * log_delta0 - log_theta;
    }
    return d;
}

}  // namespace voltube
