#pragma once

// Discrete variational problem behind the optimal variance curve: minimize
//   A[v] = integral_0^T ( (v')^2 / v + v ) dt,   v(0) = V0, v(T) = ybar, v > 0,
// whose minimizer is v~(t) = V0 u(t)^2 with u'' = u/4.  The discrete action is
// jointly convex in the knot values ((v')^2/v is quadratic-over-linear), so a
// damped Newton iteration on the interior knots converges globally.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "voltube/common.hpp"

namespace voltube {

struct DiscreteCurve {
    std::vector<double> grid;    // uniform t_0 = 0 .. t_N = T
    std::vector<double> values;  // v(t_k) > 0
};

namespace detail {
inline void check_discrete_curve(const DiscreteCurve& c) {
    if (c.grid.size() != c.values.size() || c.grid.size() < 3)
        throw std::invalid_argument("DiscreteCurve: need matching grid/values with >= 3 knots");
    for (double v : c.values)
        if (!(v > 0.0)) throw std::invalid_argument("DiscreteCurve: values must be positive");
}
}  // namespace detail

// Trapezoid action with cellwise forward-difference derivative:
//   A = sum_i h [ d_i^2 (1/v_i + 1/v_{i+1})/2 + (v_i + v_{i+1})/2 ],  d_i = (v_{i+1}-v_i)/h.
inline double action(const DiscreteCurve& c) {
    detail::check_discrete_curve(c);
    const std::size_t n = c.grid.size() - 1;
    const double h = (c.grid.back() - c.grid.front()) / static_cast<double>(n);
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (c.values[i + 1] - c.values[i]) / h;
        a += h * (d * d * 0.5 * (1.0 / c.values[i] + 1.0 / c.values[i + 1]) +
                  0.5 * (c.values[i] + c.values[i + 1]));
    }
    return a;
}

// Max over interior knots of |v''/v' - v'/(2v) - v/(2v')| with central
// differences, normalized by the local scale |v''/v'| + |v'/(2v)| + |v/(2v')|.
// Rejects curves whose central-difference v' vanishes somewhere (the
// stationarity identity divides by v').
inline double el_residual(const DiscreteCurve& c) {
    detail::check_discrete_curve(c);
    const std::size_t n = c.grid.size() - 1;
    const double h = (c.grid.back() - c.grid.front()) / static_cast<double>(n);
    double worst = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        const double vp = (c.values[k + 1] - c.values[k - 1]) / (2.0 * h);
        if (std::abs(vp) < 1e-12)
            throw std::invalid_argument("el_residual: central-difference derivative vanishes");
        const double vpp = (c.values[k + 1] - 2.0 * c.values[k] + c.values[k - 1]) / (h * h);
        const double lhs = vpp / vp;
        const double r1 = vp / (2.0 * c.values[k]);
        const double r2 = c.values[k] / (2.0 * vp);
        const double scale = std::abs(lhs) + std::abs(r1) + std::abs(r2);
        const double res = std::abs(lhs - r1 - r2) / (scale > 0.0 ? scale : 1.0);
        worst = std::max(worst, res);
    }
    return worst;
}

struct MinimizeResult {
    DiscreteCurve curve;
    int newton_steps = 0;
    bool converged = false;
    double grad_max = 0.0;  // max-norm of the action gradient at the returned iterate
};

// Damped Newton on the interior knots.  Positivity and monotone action
// decrease are enforced by step halving; convergence is declared when the
// gradient max-norm drops to 1e-10.  On non-convergence after max_iters the
// last iterate is returned with converged = false.
inline MinimizeResult minimize_action(double V0, double y_bar, double T, std::size_t steps,
                                      const std::vector<double>& init = {},
                                      int max_iters = 500) {
    if (!(V0 > 0.0) || !(y_bar >= V0) || !(T > 0.0))
        throw std::invalid_argument("minimize_action: need V0 > 0, y_bar >= V0, T > 0");
    if (steps < 2) throw std::invalid_argument("minimize_action: need at least 2 steps");
    const std::size_t n = steps;
    const double h = T / static_cast<double>(n);

    DiscreteCurve c;
    c.grid.resize(n + 1);
    c.values.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) c.grid[k] = T * static_cast<double>(k) / static_cast<double>(n);
    if (!init.empty()) {
        if (init.size() != n + 1)
            throw std::invalid_argument("minimize_action: init size must equal steps + 1");
        c.values = init;
        for (double v : c.values)
            if (!(v > 0.0)) throw std::invalid_argument("minimize_action: init must be positive");
    } else {
        for (std::size_t k = 0; k <= n; ++k)
            c.values[k] = V0 + (y_bar - V0) * static_cast<double>(k) / static_cast<double>(n);
    }
    c.values[0] = V0;
    c.values[n] = y_bar;

    const std::size_t m = n - 1;  // interior unknowns
    std::vector<double> grad(m), diag(m), off(m > 0 ? m - 1 : 0), step(m), lower(m), rhs(m);

    auto compute_grad = [&](const std::vector<double>& v) {
        for (std::size_t k = 1; k <= m; ++k) {
            const double dl = (v[k] - v[k - 1]) / h;
            const double dr = (v[k + 1] - v[k]) / h;
            const double gl = 2.0 * dl * 0.5 * (1.0 / v[k - 1] + 1.0 / v[k]) -
                              h * dl * dl / (2.0 * v[k] * v[k]) + h / 2.0;
            const double gr = -2.0 * dr * 0.5 * (1.0 / v[k] + 1.0 / v[k + 1]) -
                              h * dr * dr / (2.0 * v[k] * v[k]) + h / 2.0;
            grad[k - 1] = gl + gr;
        }
    };
    auto compute_hess = [&](const std::vector<double>& v) {
        for (std::size_t k = 1; k <= m; ++k) {
            const double dl = (v[k] - v[k - 1]) / h;
            const double dr = (v[k + 1] - v[k]) / h;
            const double al = 0.5 * (1.0 / v[k - 1] + 1.0 / v[k]);
            const double ar = 0.5 * (1.0 / v[k] + 1.0 / v[k + 1]);
            diag[k - 1] = 2.0 * al / h - 2.0 * dl / (v[k] * v[k]) + h * dl * dl / (v[k] * v[k] * v[k]) +
                          2.0 * ar / h + 2.0 * dr / (v[k] * v[k]) + h * dr * dr / (v[k] * v[k] * v[k]);
            if (k < m) {
                off[k - 1] = -2.0 * ar / h + dr / (v[k + 1] * v[k + 1]) - dr / (v[k] * v[k]);
            }
        }
    };

    MinimizeResult out;
    out.curve = c;
    double cur_action = action(c);
    for (int it = 0; it < max_iters; ++it) {
        compute_grad(c.values);
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        out.grad_max = gmax;
        if (gmax <= 1e-10) {
            out.converged = true;
            out.newton_steps = it;
            out.curve = c;
            return out;
        }
        compute_hess(c.values);
        // Thomas solve of (tridiag) step = grad.
        rhs = grad;
        lower[0] = diag[0];
        for (std::size_t i = 1; i < m; ++i) {
            const double w = off[i - 1] / lower[i - 1];
            lower[i] = diag[i] - w * off[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        step[m - 1] = rhs[m - 1] / lower[m - 1];
        for (std::size_t i = m - 1; i-- > 0;) {
            step[i] = (rhs[i] - off[i] * step[i + 1]) / lower[i];
        }
        // Damped update: halve until positive and non-increasing.
        double alpha = 1.0;
        bool accepted = false;
        std::vector<double> trial = c.values;
        for (int halvings = 0; halvings < 60; ++halvings) {
            bool positive = true;
            for (std::size_t k = 1; k <= m; ++k) {
                trial[k] = c.values[k] - alpha * step[k - 1];
                if (!(trial[k] > 0.0)) {
                    positive = false;
                    break;
                }
            }
            if (positive) {
                DiscreteCurve t{c.grid, trial};
                const double a = action(t);
                if (a <= cur_action + 1e-15 * std::abs(cur_action)) {
                    c.values = trial;
                    cur_action = a;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            out.newton_steps = it + 1;
            out.curve = c;
            return out;  // stuck: converged stays false
        }
    }
    compute_grad(c.values);
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    out.grad_max = gmax;
    out.converged = gmax <= 1e-10;
    out.newton_steps = max_iters;
    out.curve = c;
    return out;
}

}  // namespace voltube
