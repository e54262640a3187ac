#pragma once

// Model layer: coefficient triple (eta, beta, sigma) of a square-root
// local-stochastic-volatility model
//
//   dX_t = -0.5 eta(t,X_t)^2 V_t dt + eta(t,X_t) sqrt(V_t) (rho dW1 + rho_bar dW2)
//   dV_t =  beta(t,V_t) dt          + sigma(t,V_t) sqrt(V_t) dW1
//
// together with the declared regularity/growth envelope (Lipschitz constant K,
// two-sided bounds on eta and sigma) and a sampling-based hypothesis checker.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "voltube/common.hpp"

namespace voltube {

using Coefficient = std::function<double(double, double)>;

struct ModelSpec {
    Coefficient eta;    // local-vol factor eta(t, x)
    Coefficient beta;   // variance drift beta(t, v)
    Coefficient sigma;  // vol-of-vol sigma(t, v)
    double rho = 0.0;   // correlation in [-1, 1], |rho| < 1
    double V0 = 0.0;    // initial variance, > 0
    double T = 0.0;     // horizon, > 0
    double K = 0.0;     // Lipschitz/growth constant, > 1
    double eta_lo = 0.0, eta_hi = 0.0;      // 0 < eta_lo < 1 < eta_hi
    double sigma_lo = 0.0, sigma_hi = 0.0;  // 0 < sigma_lo < 1 < sigma_hi
    std::string tag = "custom";             // canonical description used in hashes/reports

    double rho_bar() const { return std::sqrt(1.0 - rho * rho); }

    // Scalar invariants only; the functional hypotheses are checked by sampling.
    void check() const {
        if (!(V0 > 0.0)) throw std::invalid_argument("ModelSpec: V0 must be positive");
        if (!(T > 0.0)) throw std::invalid_argument("ModelSpec: T must be positive");
        if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("ModelSpec: |rho| must be < 1");
        if (!(K > 1.0)) throw std::invalid_argument("ModelSpec: K must exceed 1");
        if (!(eta_lo > 0.0 && eta_lo < 1.0 && eta_hi > 1.0))
            throw std::invalid_argument("ModelSpec: eta bounds must satisfy 0 < lo < 1 < hi");
        if (!(sigma_lo > 0.0 && sigma_lo < 1.0 && sigma_hi > 1.0))
            throw std::invalid_argument("ModelSpec: sigma bounds must satisfy 0 < lo < 1 < hi");
        if (!eta || !beta || !sigma)
            throw std::invalid_argument("ModelSpec: all three coefficient functions are required");
    }

    std::uint64_t hash() const { return fnv1a64(tag); }
};

// One recorded violation of the Lipschitz hypothesis.
struct LipschitzViolation {
    char which = 'e';  // 'e' = eta, 's' = sigma
    double s = 0.0, a1 = 0.0;
    double t = 0.0, a2 = 0.0;
    double lhs = 0.0, rhs = 0.0;
};

// One recorded violation of the bound/growth hypothesis.
struct BoundViolation {
    char which = 'e';  // 'e' = eta bounds, 's' = sigma bounds, 'b' = drift growth
    double t = 0.0, a = 0.0;
    double value = 0.0;
};

struct HypothesisReport {
    std::vector<LipschitzViolation> lipschitz_violations;
    std::vector<BoundViolation> bound_violations;
    std::size_t samples = 0;

    bool passes() const { return lipschitz_violations.empty() && bound_violations.empty(); }
};

namespace detail {

// Low-discrepancy points in [0,1)^6 (generalized golden-ratio sequence),
// phase-shifted by the seed so repeated audits explore different point sets.
class QuasiSampler6 {
  public:
    explicit QuasiSampler6(std::uint64_t seed) {
        // Unique positive root of x^7 = x + 1.
        double g = 1.1;
        for (int i = 0; i < 64; ++i) g = std::pow(1.0 + g, 1.0 / 7.0);
        double a = 1.0 / g;
        for (int d = 0; d < 6; ++d) {
            alpha_[d] = a;
            a /= g;
            state_[d] = static_cast<double>(splitmix64(seed + 0x9E37u * (d + 1)) >> 11) * 0x1p-53;
        }
    }

    std::array<double, 6> next() {
        std::array<double, 6> u;
        for (int d = 0; d < 6; ++d) {
            state_[d] += alpha_[d];
            state_[d] -= std::floor(state_[d]);
            u[d] = state_[d];
        }
        return u;
    }

  private:
    std::array<double, 6> alpha_{};
    std::array<double, 6> state_{};
};

}  // namespace detail

// Samples the Lipschitz hypothesis on pairs and the bound/growth hypothesis on
// points over t,s in [0,T], x in [-10,10], v in [0, 100*V0].  A small relative
// slack absorbs floating-point noise in exactly-tight cases.
inline HypothesisReport validate_hypotheses(const ModelSpec& spec, std::size_t samples,
                                            std::uint64_t seed) {
    spec.check();
    constexpr double kRelSlack = 1e-9;
    constexpr double kAbsSlack = 1e-12;
    constexpr std::size_t kMaxRecorded = 32;

    HypothesisReport report;
    report.samples = samples;
    detail::QuasiSampler6 qs(seed);

    for (std::size_t i = 0; i < samples; ++i) {
        const auto u = qs.next();
        const double s = u[0] * spec.T;
        const double t = u[1] * spec.T;
        const double x1 = -10.0 + 20.0 * u[2];
        const double x2 = -10.0 + 20.0 * u[3];
        const double v1 = 100.0 * spec.V0 * u[4];
        const double v2 = 100.0 * spec.V0 * u[5];

        const double e1 = spec.eta(s, x1), e2 = spec.eta(t, x2);
        const double s1 = spec.sigma(s, v1), s2 = spec.sigma(t, v2);
        const double b1 = spec.beta(s, v1), b2 = spec.beta(t, v2);

        const double lip_e = spec.K * (std::abs(x1 - x2) + std::abs(s - t));
        if (std::abs(e1 - e2) > lip_e * (1.0 + kRelSlack) + kAbsSlack &&
            report.lipschitz_violations.size() < kMaxRecorded) {
            report.lipschitz_violations.push_back({'e', s, x1, t, x2, std::abs(e1 - e2), lip_e});
        }
        const double lip_s = spec.K * (std::abs(v1 - v2) + std::abs(s - t));
        if (std::abs(s1 - s2) > lip_s * (1.0 + kRelSlack) + kAbsSlack &&
            report.lipschitz_violations.size() < kMaxRecorded) {
            report.lipschitz_violations.push_back({'s', s, v1, t, v2, std::abs(s1 - s2), lip_s});
        }

        auto check_eta_bounds = [&](double tt, double xx, double val) {
            if ((val < spec.eta_lo * (1.0 - kRelSlack) - kAbsSlack ||
                 val > spec.eta_hi * (1.0 + kRelSlack) + kAbsSlack) &&
                report.bound_violations.size() < kMaxRecorded) {
                report.bound_violations.push_back({'e', tt, xx, val});
            }
        };
        auto check_sigma_bounds = [&](double tt, double vv, double val) {
            if ((val < spec.sigma_lo * (1.0 - kRelSlack) - kAbsSlack ||
                 val > spec.sigma_hi * (1.0 + kRelSlack) + kAbsSlack) &&
                report.bound_violations.size() < kMaxRecorded) {
                report.bound_violations.push_back({'s', tt, vv, val});
            }
        };
        check_eta_bounds(s, x1, e1);
        check_eta_bounds(t, x2, e2);
        check_sigma_bounds(s, v1, s1);
        check_sigma_bounds(t, v2, s2);
        auto check_growth = [&](double tt, double vv, double val) {
            if (std::abs(val) > spec.K * (1.0 + vv) * (1.0 + kRelSlack) + kAbsSlack &&
                report.bound_violations.size() < kMaxRecorded) {
                report.bound_violations.push_back({'b', tt, vv, val});
            }
        };
        check_growth(s, v1, b1);
        check_growth(t, v2, b2);
    }
    return report;
}

namespace detail {
inline std::string format_param(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
}  // namespace detail

// Heston: eta == 1, beta(v) = kappa (theta - v), sigma == xi.
// Declared envelope: smallest growth constant valid for the affine drift
// (floored just above 1), lower bounds min(xi,1)/2, upper bounds max(1.5, xi).
inline ModelSpec make_heston(double kappa, double theta, double xi, double rho, double V0,
                             double T) {
    if (!(kappa > 0.0) || !(theta > 0.0) || !(xi > 0.0))
        throw std::invalid_argument("make_heston: kappa, theta, xi must be positive");
    ModelSpec s;
    s.eta = [](double, double) { return 1.0; };
    s.beta = [kappa, theta](double, double v) { return kappa * (theta - v); };
    s.sigma = [xi](double, double) { return xi; };
    s.rho = rho;
    s.V0 = V0;
    s.T = T;
    s.K = std::max(kappa * std::max(1.0, theta), 1.0 + 1e-9);
    s.eta_lo = std::min(xi, 1.0) / 2.0;
    s.eta_hi = 1.5;
    s.sigma_lo = std::min(xi, 1.0) / 2.0;
    s.sigma_hi = std::max(1.5, xi);
    s.tag = "heston(kappa=" + detail::format_param(kappa) + ",theta=" + detail::format_param(theta) +
            ",xi=" + detail::format_param(xi) + ",rho=" + detail::format_param(rho) +
            ",V0=" + detail::format_param(V0) + ",T=" + detail::format_param(T) + ")";
    s.check();
    return s;
}

// Heston variance dynamics with a bounded, x-dependent local-vol skew:
//   eta(t, x) = clip(eta0 (1 + eps tanh(x)), eta0(1-eps), eta0(1+eps)).
// The clip window doubles as the declared eta bounds, so the bound hypothesis
// holds by construction and the Lipschitz constant of eta is eta0 * eps.
inline ModelSpec make_bounded_skew_heston(double kappa, double theta, double xi, double rho,
                                          double V0, double T, double eta0, double eps) {
    if (!(eps > 0.0 && eps < 1.0))
        throw std::invalid_argument("make_bounded_skew_heston: eps must lie in (0, 1)");
    if (!(eta0 > 0.0)) throw std::invalid_argument("make_bounded_skew_heston: eta0 must be positive");
    const double lo = eta0 * (1.0 - eps);
    const double hi = eta0 * (1.0 + eps);
    if (!(lo < 1.0 && hi > 1.0))
        throw std::invalid_argument(
            "make_bounded_skew_heston: clip window [eta0(1-eps), eta0(1+eps)] must straddle 1");
    ModelSpec s = make_heston(kappa, theta, xi, rho, V0, T);
    s.eta = [eta0, eps, lo, hi](double, double x) {
        const double raw = eta0 * (1.0 + eps * std::tanh(x));
        return std::min(hi, std::max(lo, raw));
    };
    s.eta_lo = lo;
    s.eta_hi = hi;
    s.K = std::max(s.K, eta0 * eps + 1e-12);
    s.tag = "bounded_skew_heston(kappa=" + detail::format_param(kappa) +
            ",theta=" + detail::format_param(theta) + ",xi=" + detail::format_param(xi) +
            ",rho=" + detail::format_param(rho) + ",V0=" + detail::format_param(V0) +
            ",T=" + detail::format_param(T) + ",eta0=" + detail::format_param(eta0) +
            ",eps=" + detail::format_param(eps) + ")";
    s.check();
    return s;
}

}  // namespace voltube
