// Discrete action minimization: the damped Newton solver must recover the
// closed-form minimizer v(t) = V0 u(t)^2, whose action has the explicit value
//   A = 2 V0 [A0^2 (e^T - 1) + B0^2 (1 - e^{-T})]
// for u = A0 e^{t/2} + B0 e^{-t/2} with u(0) = 1, u(T) = sqrt(ybar/V0).

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "voltube/curves.hpp"
#include "voltube/variational.hpp"

using namespace voltube;

namespace {

double analytic_action(double V0, double y_bar, double T) {
    const double q = std::sqrt(y_bar / V0);
    const double a0 = (q - std::exp(-T / 2.0)) / (2.0 * std::sinh(T / 2.0));
    const double b0 = 1.0 - a0;
    return 2.0 * V0 *
           (a0 * a0 * (std::exp(T) - 1.0) + b0 * b0 * (1.0 - std::exp(-T)));
}

DiscreteCurve sampled_optimum(double y, double V0, double T, std::size_t steps) {
    const CurveTriple c = detail::make_curve_unchecked(y, V0, T, steps);
    return {c.grid, c.v_tilde};
}

}  // namespace

TEST(Action, ConstantCurveIntegratesToTV) {
    DiscreteCurve c;
    const std::size_t n = 50;
    for (std::size_t k = 0; k <= n; ++k) {
        c.grid.push_back(2.0 * static_cast<double>(k) / static_cast<double>(n));
        c.values.push_back(0.7);
    }
    // (v')^2/v = 0 and the trapezoid of the constant v is exact: A = T * v.
    EXPECT_NEAR(action(c), 2.0 * 0.7, 1e-13);
}

TEST(Action, RejectsMalformedCurves) {
    DiscreteCurve c;
    c.grid = {0.0, 0.5, 1.0};
    c.values = {1.0, 1.0};
    EXPECT_THROW(action(c), std::invalid_argument);
    c.values = {1.0, -1.0, 1.0};
    EXPECT_THROW(action(c), std::invalid_argument);
    c.grid = {0.0, 1.0};
    c.values = {1.0, 1.0};
    EXPECT_THROW(action(c), std::invalid_argument);
}

TEST(Action, AnalyticCurveMatchesClosedFormValue) {
    const double V0 = 1.0, T = 1.0, y = 25.0;
    const DiscreteCurve c = sampled_optimum(y, V0, T, 2000);
    const double exact = analytic_action(V0, y + V0, T);
    // Trapezoid on 2e3 knots: O(h^2) accuracy.
    EXPECT_NEAR(action(c), exact, 1e-4 * exact);
}

TEST(ElResidualTest, SmallOnOptimumLargeOnStraightLine) {
    const DiscreteCurve opt = sampled_optimum(25.0, 1.0, 1.0, 1000);
    EXPECT_LE(el_residual(opt), 1e-5);

    DiscreteCurve line;
    const std::size_t n = 100;
    for (std::size_t k = 0; k <= n; ++k) {
        line.grid.push_back(static_cast<double>(k) / static_cast<double>(n));
        line.values.push_back(1.0 + 25.0 * static_cast<double>(k) / static_cast<double>(n));
    }
    // A straight line has v'' = 0, so the normalized residual is exactly 1.
    EXPECT_GT(el_residual(line), 0.5);

    DiscreteCurve flat;
    flat.grid = {0.0, 0.5, 1.0};
    flat.values = {1.0, 1.0, 1.0};
    EXPECT_THROW(el_residual(flat), std::invalid_argument);
}

TEST(MinimizeAction, InputValidation) {
    EXPECT_THROW(minimize_action(0.0, 2.0, 1.0, 10), std::invalid_argument);
    EXPECT_THROW(minimize_action(1.0, 0.5, 1.0, 10), std::invalid_argument);  // y_bar < V0
    EXPECT_THROW(minimize_action(1.0, 2.0, 0.0, 10), std::invalid_argument);
    EXPECT_THROW(minimize_action(1.0, 2.0, 1.0, 1), std::invalid_argument);
    EXPECT_THROW(minimize_action(1.0, 2.0, 1.0, 10, std::vector<double>(4, 1.0)),
                 std::invalid_argument);
    EXPECT_THROW(minimize_action(1.0, 2.0, 1.0, 10, std::vector<double>(11, -1.0)),
                 std::invalid_argument);
}

TEST(MinimizeAction, StraightLineStartReachesAnalyticOptimum) {
    struct Case {
        double V0, y, T;
    };
    for (const Case& cs : {Case{1.0, 25.0, 1.0}, Case{0.04, 5.0, 2.0}, Case{0.09, 2.0, 0.5}}) {
        const double y_bar = cs.y + cs.V0;
        const MinimizeResult r = minimize_action(cs.V0, y_bar, cs.T, 200);
        EXPECT_TRUE(r.converged) << "V0 " << cs.V0;
        EXPECT_LE(r.grad_max, 1e-10);
        const double exact = analytic_action(cs.V0, y_bar, cs.T);
        const double got = action(r.curve);
        // Within 0.5% of the continuous optimum, and never below it by more
        // than the discretization can explain.
        EXPECT_NEAR(got, exact, 5e-3 * exact) << "V0 " << cs.V0;
        EXPECT_GE(got, exact * (1.0 - 5e-3));
        // The discrete minimizer cannot exceed the discrete action of the
        // sampled continuous optimum.
        const DiscreteCurve samp = sampled_optimum(cs.y, cs.V0, cs.T, 200);
        EXPECT_LE(got, action(samp) + 1e-10);
    }
}

TEST(MinimizeAction, AnalyticStartConvergesInThreeSteps) {
    const double V0 = 1.0, y = 25.0, T = 1.0;
    const DiscreteCurve samp = sampled_optimum(y, V0, T, 200);
    const MinimizeResult r = minimize_action(V0, y + V0, T, 200, samp.values);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.newton_steps, 3);
}

TEST(MinimizeAction, MinimizerTracksClosedFormCurve) {
    const double V0 = 1.0, y = 25.0, T = 1.0;
    const MinimizeResult r = minimize_action(V0, y + V0, T, 200);
    ASSERT_TRUE(r.converged);
    const CurveTriple c = detail::make_curve_unchecked(y, V0, T, 200);
    double worst = 0.0;
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
        worst = std::max(worst, std::abs(r.curve.values[k] - c.v_tilde[k]) / c.v_tilde[k]);
    }
    EXPECT_LE(worst, 1e-3);
}

TEST(MinimizeAction, ReturnedPointIsALocalMinimum) {
    const MinimizeResult r = minimize_action(0.5, 10.5, 1.5, 100);
    ASSERT_TRUE(r.converged);
    const double base = action(r.curve);
    // Any feasible perturbation of interior knots must not lower the action.
    for (std::size_t bump = 10; bump < 100; bump += 17) {
        DiscreteCurve pert = r.curve;
        pert.values[bump] *= 1.01;
        EXPECT_GE(action(pert), base);
        pert.values[bump] = r.curve.values[bump] * 0.99;
        EXPECT_GE(action(pert), base);
    }
}
