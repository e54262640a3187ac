#pragma once

// Estimators over simulated path batches: tube-staying probabilities, terminal
// tails, small balls, tail-slope fits, exponential moments, variance-increment
// scaling, and kernel density estimates.  Probability estimates carry exact
// Clopper-Pearson confidence intervals because tail hit counts are tiny.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "voltube/brownian.hpp"
#include "voltube/common.hpp"
#include "voltube/curves.hpp"
#include "voltube/model.hpp"
#include "voltube/simulate.hpp"

namespace voltube {

struct MCEstimate {
    double p_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 1.0;
    std::size_t n = 0;
    std::size_t hits = 0;
};

// Exact binomial confidence interval at level 1 - alpha.
inline MCEstimate clopper_pearson(std::size_t hits, std::size_t n, double alpha = 0.05) {
    if (n == 0) throw std::invalid_argument("clopper_pearson: n must be positive");
    if (hits > n) throw std::invalid_argument("clopper_pearson: hits > n");
    MCEstimate e;
    e.n = n;
    e.hits = hits;
    e.p_hat = static_cast<double>(hits) / static_cast<double>(n);
    const double h = static_cast<double>(hits);
    const double m = static_cast<double>(n);
    e.ci_low = hits == 0 ? 0.0 : boost::math::ibeta_inv(h, m - h + 1.0, alpha / 2.0);
    e.ci_high = hits == n ? 1.0 : boost::math::ibeta_inv(h + 1.0, m - h, 1.0 - alpha / 2.0);
    return e;
}

// True when the path stays within Euclidean distance r_tilde(t) of
// (x_tilde(t), v_tilde(t)) at every knot of the uniform grid.
inline bool path_in_tube(const CurveTriple& curve, double t0, double dt,
                         const std::vector<double>& xs, const std::vector<double>& vs) {
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double t = t0 + dt * static_cast<double>(k);
        const double dx = xs[k] - curve.x_tilde_at(t);
        const double dv = vs[k] - curve.v_tilde_at(t);
        const double r = curve.r_tilde_at(t);
        if (dx * dx + dv * dv > r * r) return false;
    }
    return true;
}

// Grid-restricted tube probability: membership is checked at grid knots only,
// which upward-biases the continuous-time probability; reports must label the
// estimator accordingly.  With bridge_correction each path is down-weighted by
// the probability that the dominant (X) component's Brownian bridge between
// consecutive knots stays inside the local band of half-width r_tilde; the
// weighted sum is floored to an integer hit count for the exact CI, which is
// conservative on the lower endpoint.
inline MCEstimate tube_probability(const PathBatch& batch, const CurveTriple& curve,
                                   bool bridge_correction = false,
                                   const ModelSpec* spec = nullptr) {
    if (batch.n_paths == 0) throw std::invalid_argument("tube_probability: empty batch");
    if (batch.t0 != 0.0 || std::abs(batch.T - curve.T) > 1e-12 * std::max(1.0, curve.T))
        throw std::invalid_argument("tube_probability: batch and curve horizons differ");
    if (bridge_correction && spec == nullptr)
        throw config_error("tube_probability: bridge correction needs the model spec");
    const std::size_t m = batch.n_steps + 1;
    double weighted = 0.0;
    std::size_t plain_hits = 0;
    std::vector<double> xs(m), vs(m);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        std::copy_n(batch.xs.data() + p * m, m, xs.data());
        std::copy_n(batch.vs.data() + p * m, m, vs.data());
        if (!path_in_tube(curve, batch.t0, batch.dt, xs, vs)) continue;
        ++plain_hits;
        if (!bridge_correction) continue;
        double w = 1.0;
        for (std::size_t k = 0; k + 1 < m; ++k) {
            const double t = batch.t0 + batch.dt * static_cast<double>(k);
            const double tn = t + batch.dt;
            const double a = std::min(curve.r_tilde_at(t), curve.r_tilde_at(tn));
            const double var = spec->eta(t, xs[k]) * spec->eta(t, xs[k]) * vs[k] * batch.dt;
            if (var <= 0.0) continue;
            w *= brownian::bridge_two_sided_survival(xs[k] - curve.x_tilde_at(t),
                                                     xs[k + 1] - curve.x_tilde_at(tn), a, var);
        }
        weighted += w;
    }
    const std::size_t hits =
        bridge_correction ? static_cast<std::size_t>(std::floor(weighted)) : plain_hits;
    MCEstimate e = clopper_pearson(hits, batch.n_paths);
    if (bridge_correction) e.p_hat = weighted / static_cast<double>(batch.n_paths);
    return e;
}

// Chunk accumulator for streaming tube estimates via simulate_chunked.
struct HitCount {
    std::size_t hits = 0;
    std::size_t n = 0;
    void merge(const HitCount& o) {
        hits += o.hits;
        n += o.n;
    }
};

// P(X_T > y) and P(X_T < -y).
inline std::pair<MCEstimate, MCEstimate> terminal_tail(const PathBatch& batch, double y) {
    if (!(y > 0.0)) throw std::invalid_argument("terminal_tail: y must be positive");
    if (batch.n_paths == 0) throw std::invalid_argument("terminal_tail: empty batch");
    std::size_t up = 0, down = 0;
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        const double xT = batch.x(p, batch.n_steps);
        if (xT > y) ++up;
        if (xT < -y) ++down;
    }
    return {clopper_pearson(up, batch.n_paths), clopper_pearson(down, batch.n_paths)};
}

// P(|(X_T, V_T) - (y, |y| + V0)| <= radius).
inline MCEstimate small_ball(const PathBatch& batch, double y, double V0, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("small_ball: radius must be positive");
    if (batch.n_paths == 0) throw std::invalid_argument("small_ball: empty batch");
    const double v_target = std::abs(y) + V0;
    std::size_t hits = 0;
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        const double dx = batch.x(p, batch.n_steps) - y;
        const double dv = batch.v(p, batch.n_steps) - v_target;
        if (dx * dx + dv * dv <= radius * radius) ++hits;
    }
    return clopper_pearson(hits, batch.n_paths);
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> points;  // (y, log p_hat) actually fitted
    std::vector<double> excluded_y;                 // points dropped for thin hit counts
};

// Least-squares fit of log p_hat against y over points with enough hits to
// trust the log.  Excluded points are reported, never silently dropped.
inline SlopeFit tail_slope(const std::vector<std::pair<double, MCEstimate>>& tails,
                           std::size_t min_hits = 30) {
    SlopeFit out;
    std::vector<double> xs, ys;
    for (const auto& [y, est] : tails) {
        if (est.hits >= min_hits) {
            xs.push_back(y);
            ys.push_back(std::log(est.p_hat));
            out.points.emplace_back(y, std::log(est.p_hat));
        } else {
            out.excluded_y.push_back(y);
        }
    }
    if (xs.size() < 3)
        throw std::invalid_argument("tail_slope: need at least 3 points with enough hits");
    const LinearFit f = fit_line(xs, ys);
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.slope_stderr = f.slope_stderr;
    out.r_squared = f.r_squared;
    return out;
}

struct ExpMoment {
    double estimate = 0.0;
    double max_share = 0.0;  // largest single-path contribution / total
    bool flagged = false;    // true when the sample mean is dominated by one path
};

// Sample mean of e^{p X_T}.  A single path contributing more than 1% of the
// sum signals the heavy-tail regime near or past the moment explosion.
inline ExpMoment exp_moment(const PathBatch& batch, double p) {
    if (batch.n_paths == 0) throw std::invalid_argument("exp_moment: empty batch");
    double sum = 0.0, biggest = 0.0;
    for (std::size_t i = 0; i < batch.n_paths; ++i) {
        const double term = std::exp(p * batch.x(i, batch.n_steps));
        sum += term;
        biggest = std::max(biggest, term);
    }
    ExpMoment m;
    m.estimate = sum / static_cast<double>(batch.n_paths);
    m.max_share = sum > 0.0 ? biggest / sum : 0.0;
    m.flagged = m.max_share > 0.01;
    return m;
}

struct IncrementScaling {
    double fitted_exponent = 0.0;
    double slope_stderr = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> points;  // (log dt, log E[sup |dV|^{2p}])
};

// Estimates E[ sup_{r in [0,dt]} |V_r - V_0|^{2p} ] for each dt by MC with a
// fixed substep count, then fits the log-log slope.  Square-root diffusive
// scaling predicts a slope of about p.
inline IncrementScaling increment_scaling(const ModelSpec& spec, int p,
                                          const std::vector<double>& dts, std::size_t n,
                                          std::uint64_t seed,
                                          Scheme scheme = Scheme::euler_full_truncation) {
    if (p < 1) throw std::invalid_argument("increment_scaling: p must be >= 1");
    if (dts.size() < 3) throw std::invalid_argument("increment_scaling: need >= 3 dt values");
    double lo = dts[0], hi = dts[0];
    for (double dt : dts) {
        if (!(dt > 0.0)) throw std::invalid_argument("increment_scaling: dt must be positive");
        lo = std::min(lo, dt);
        hi = std::max(hi, dt);
    }
    if (hi < 10.0 * (1.0 - 1e-9) * lo)
        throw std::invalid_argument("increment_scaling: dt values must span a decade");
    constexpr std::size_t kSubsteps = 64;
    std::vector<double> log_dt, log_moment;
    for (std::size_t j = 0; j < dts.size(); ++j) {
        ModelSpec local = spec;
        local.T = dts[j];
        double sum = 0.0;
        for (std::size_t path = 0; path < n; ++path) {
            double sup = 0.0;
            run_path(local, scheme, 0.0, spec.V0, 0.0, kSubsteps, seed, path,
                     static_cast<std::uint32_t>(j + 1),
                     [&](std::size_t, double, double, double v) {
                         sup = std::max(sup, std::abs(v - spec.V0));
                     });
            sum += std::pow(sup, 2.0 * p);
        }
        log_dt.push_back(std::log(dts[j]));
        log_moment.push_back(std::log(sum / static_cast<double>(n)));
    }
    const LinearFit f = fit_line(log_dt, log_moment);
    IncrementScaling out;
    out.fitted_exponent = f.slope;
    out.slope_stderr = f.slope_stderr;
    out.r_squared = f.r_squared;
    for (std::size_t j = 0; j < dts.size(); ++j) out.points.emplace_back(log_dt[j], log_moment[j]);
    return out;
}

// Gaussian-kernel log-density of X_T on y_grid.  bandwidth <= 0 selects the
// Silverman rule 0.9 min(sd, IQR/1.349) n^{-1/5}.  Entries with fewer than 30
// samples within 5 bandwidths are reported as NaN (no local mass).
inline std::vector<std::pair<double, double>> kde_log_density(const PathBatch& batch,
                                                              const std::vector<double>& y_grid,
                                                              double bandwidth = 0.0) {
    if (y_grid.empty()) throw std::invalid_argument("kde_log_density: empty grid");
    if (batch.n_paths < 10000)
        throw std::invalid_argument("kde_log_density: need at least 10^4 paths");
    const std::size_t n = batch.n_paths;
    std::vector<double> xT(n);
    for (std::size_t p = 0; p < n; ++p) xT[p] = batch.x(p, batch.n_steps);
    double h = bandwidth;
    if (!(h > 0.0)) {
        double mean = 0.0;
        for (double x : xT) mean += x;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double x : xT) var += (x - mean) * (x - mean);
        var /= static_cast<double>(n - 1);
        std::vector<double> sorted = xT;
        std::sort(sorted.begin(), sorted.end());
        const auto quantile = [&](double q) {
            const double pos = q * static_cast<double>(n - 1);
            const std::size_t i = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(i);
            return i + 1 < n ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac : sorted[i];
        };
        const double iqr = quantile(0.75) - quantile(0.25);
        const double spread = std::min(std::sqrt(var), iqr / 1.349);
        h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
        if (!(h > 0.0)) throw numeric_error("kde_log_density: degenerate sample spread");
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(y_grid.size());
    const double log_norm =
        -std::log(static_cast<double>(n) * h) - 0.5 * std::log(2.0 * std::numbers::pi);
    for (double y : y_grid) {
        // log-sum-exp over kernel exponents keeps deep-tail evaluations finite.
        double max_e = -std::numeric_limits<double>::infinity();
        std::size_t effective = 0;
        for (double x : xT) {
            const double z = (y - x) / h;
            max_e = std::max(max_e, -0.5 * z * z);
            if (std::abs(y - x) < 5.0 * h) ++effective;
        }
        if (effective < 30) {
            out.emplace_back(y, std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double acc = 0.0;
        for (double x : xT) {
            const double z = (y - x) / h;
            acc += std::exp(-0.5 * z * z - max_e);
        }
        out.emplace_back(y, log_norm + max_e + std::log(acc));
    }
    return out;
}

}  // namespace voltube
