#include <gtest/gtest.h>

#include "rse/belief.hpp"
#include "rse/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace rse;

namespace {

const GridGeometry kGrid{30.0, 2001};

double normal_pdf(double x, double var) {
    return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// P(|Z| >= r) for Z ~ N(0, var)
double two_sided_tail(double r, double var) { return std::erfc(r / std::sqrt(2.0 * var)); }

ReceptionModel exponential() { return ReceptionModel{}; }

} // namespace

TEST(Grid, SymmetricNodesAndWeights) {
    EXPECT_EQ(kGrid.center(), 1000u);
    EXPECT_DOUBLE_EQ(kGrid.spacing(), 0.03);
    EXPECT_DOUBLE_EQ(kGrid.node(0), -30.0);
    EXPECT_DOUBLE_EQ(kGrid.node(2000), 30.0);
    EXPECT_DOUBLE_EQ(kGrid.weight(0), 0.015);
    EXPECT_DOUBLE_EQ(kGrid.weight(1), 0.03);
    EXPECT_EQ(kGrid.shell_of(990), 10u);
    EXPECT_EQ(kGrid.nearest(0.031), 1001u);
    EXPECT_EQ(kGrid.nearest(100.0), 2000u);
    EXPECT_THROW((GridGeometry{30.0, 2000}.validate()), ConfigError);
}

TEST(Grid, DefaultWidthCoversSaturation) {
    const auto m = canonical_model();
    const auto g = GridGeometry::default_for(m);
    const double q = 1.0 - std::exp(-2.0);
    EXPECT_NEAR(g.half_width, 30.0 * std::sqrt(1.0 / (1.0 - q)), 1e-12);
    EXPECT_GT(g.half_width, m.actions.saturation_radius + 10.0);
}

TEST(Gaussian, Moments) {
    for (double var : {0.5, 1.0, 4.0}) {
        const auto g = gaussian_grid(1.5, var, kGrid);
        EXPECT_NEAR(total_mass(g), 1.0, 1e-12);
        EXPECT_NEAR(mean(g), 1.5, 1e-10);
        EXPECT_NEAR(variance(g), var, 1e-8);
    }
}

TEST(Gaussian, RejectsDensityOutsideGrid) {
    EXPECT_THROW((void)gaussian_grid(0.0, 100.0, kGrid), GeometryError);
    EXPECT_THROW((void)gaussian_grid(0.0, -1.0, kGrid), PreconditionError);
}

TEST(Gaussian, TailMassMatchesErfc) {
    const auto g = gaussian_grid(0.0, 1.0, kGrid);
    for (double r : {0.5, 1.0, 1.234, 2.0}) {
        // piecewise-constant cells: O(spacing^2) error
        EXPECT_NEAR(tail_mass(g, r), two_sided_tail(r, 1.0), 1e-4) << r;
    }
}

TEST(Belief, NormalizedGridRejectsBadInput) {
    EXPECT_THROW((void)normalized_grid(kGrid, std::vector<double>(kGrid.n_points, 0.0)), PreconditionError);
    EXPECT_THROW((void)normalized_grid(kGrid, std::vector<double>(3, 1.0)), PreconditionError);
    auto v = std::vector<double>(kGrid.n_points, 1.0);
    v[5] = -1.0;
    EXPECT_THROW((void)normalized_grid(kGrid, v), PreconditionError);
}

TEST(Belief, AsymmetryOfShiftedGaussian) {
    EXPECT_LT(asymmetry(gaussian_grid(0.0, 1.0, kGrid)), 1e-15);
    EXPECT_GT(asymmetry(gaussian_grid(0.5, 1.0, kGrid)), 0.1);
}

TEST(Action, RadialStepIntegratesExactly) {
    // uniform density on the 67 nodes with |e| <= 1, i.e. on cells covering |e| <= 33.5 spacing
    std::vector<double> v(kGrid.n_points, 0.0);
    for (std::size_t j = 0; j < kGrid.n_points; ++j) {
        if (std::abs(kGrid.node(j)) <= 1.0 + 1e-12) {
            v[j] = 1.0;
        }
    }
    const auto theta = normalized_grid(kGrid, v);
    const auto a = radial_step_action(kGrid, {0.0, 4.0}, {0.3217});
    const auto p = action_profile(a, 1.0, exponential());
    const double support = 33.5 * kGrid.spacing();
    const double cells_outside = (support - 0.3217) / support;
    EXPECT_NEAR(stage_terms(theta, p).power, 4.0 * cells_outside, 1e-12);
}

TEST(Action, ValidateChecksLevelsAndSaturation) {
    const ActionSet set;
    auto a = ActionFunction::constant(kGrid, 4.0);
    EXPECT_NO_THROW(a.validate(kGrid, set));
    a.values[kGrid.center()] = 3.0;
    EXPECT_THROW(a.validate(kGrid, set), PreconditionError);
    a = ActionFunction::constant(kGrid, 1.0);
    EXPECT_THROW(a.validate(kGrid, set), PreconditionError);
}

TEST(Action, AtUsesMixedCells) {
    const double r = 10.25 * kGrid.spacing();
    const auto a = radial_step_action(kGrid, {0.0, 2.0}, {r});
    EXPECT_EQ(a.at(kGrid, 0.0), 0.0);
    EXPECT_EQ(a.at(kGrid, r - 1e-9), 0.0);
    EXPECT_EQ(a.at(kGrid, r + 1e-9), 2.0);
    EXPECT_EQ(a.at(kGrid, -r - 1e-9), 2.0);
}

TEST(Stage, SuccessProbabilityOfThresholdAction) {
    const auto theta = gaussian_grid(0.0, 1.0, kGrid);
    const double r = 1.0;
    const auto a = radial_step_action(kGrid, {0.0, 4.0}, {r});
    const double q = 1.0 - std::exp(-4.0 * 0.5);
    EXPECT_NEAR(success_prob(theta, 0.5, a, exponential()), q * two_sided_tail(r, 1.0), 2e-5);
}

TEST(Stage, ConstantActionLeavesBeliefUnchanged) {
    const auto theta = gaussian_grid(0.3, 2.0, kGrid);
    const auto a = ActionFunction::constant(kGrid, 2.0);
    const auto post = post_failure(theta, 0.5, a, exponential());
    for (std::size_t j = 0; j < theta.size(); ++j) {
        EXPECT_NEAR(post.density[j], theta.density[j], 1e-14);
    }
    // distortion of a constant action is (1 - q) var
    const double q = 1.0 - std::exp(-1.0);
    const auto t = stage_terms(theta, action_profile(a, 0.5, exponential()));
    EXPECT_NEAR(t.distortion, (1.0 - q) * 2.0, 1e-8);
    EXPECT_NEAR(t.post_fail_mean, 0.3, 1e-10);
    EXPECT_NEAR(stage_cost(theta, 0.5, a, exponential(), CostWeights{0.5}), 0.5 * 2.0 + (1.0 - q) * 2.0, 1e-8);
}

TEST(Stage, AsymmetricActionShiftsPostFailureMean) {
    // transmit only for e >= 0: failure keeps mostly the negative half
    const auto theta = gaussian_grid(0.0, 1.0, kGrid);
    auto a = ActionFunction::constant(kGrid, 0.0);
    for (std::size_t j = kGrid.center() + 1; j < kGrid.n_points; ++j) {
        a.values[j] = 4.0;
    }
    ReceptionModel on;
    on.form = ReceptionForm::on_off;
    const auto post = post_failure(theta, 1.0, a, on);
    // N(0,1) restricted to e < 0 (half the center cell kept): mean -sqrt(2/pi) up to one cell
    EXPECT_NEAR(mean(post), -std::sqrt(2.0 / std::numbers::pi), 0.02);
}

TEST(Stage, CertainSuccessIsDegenerate) {
    const auto theta = gaussian_grid(0.0, 1.0, kGrid);
    ReceptionModel on;
    on.form = ReceptionForm::on_off;
    const auto a = ActionFunction::constant(kGrid, 4.0);
    EXPECT_TRUE(stage_terms(theta, action_profile(a, 1.0, on)).degenerate);
    EXPECT_THROW((void)post_failure(theta, 1.0, a, on), DegenerateConditioningError);
}

TEST(Propagate, GaussianClosure) {
    ScalarProcess p{1.2, 1.0, 0.0, 0.0};
    const TransitionKernel k(kGrid, p);
    const auto next = propagate(gaussian_grid(0.0, 1.0, kGrid), 1.0, ActionFunction::constant(kGrid, 2.0), false, k,
                                exponential());
    double linf = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) {
        linf = std::max(linf, std::abs(next.density[j] - normal_pdf(kGrid.node(j), 2.44)));
    }
    EXPECT_LE(linf, 1e-6);
    EXPECT_NEAR(variance(next), 2.44, 1e-6);
    EXPECT_NEAR(total_mass(next), 1.0, 1e-12);
}

TEST(Propagate, SuccessResetsToNoise) {
    ScalarProcess p{1.2, 0.7, 0.0, 0.0};
    const TransitionKernel k(kGrid, p);
    const auto next = propagate(gaussian_grid(2.0, 3.0, kGrid), 1.0, ActionFunction::constant(kGrid, 2.0), true, k,
                                exponential());
    EXPECT_NEAR(variance(next), 0.7, 1e-8);
    EXPECT_NEAR(mean(next), 0.0, 1e-12);
}

TEST(Propagate, OverflowIsReported) {
    const GridGeometry narrow{8.0, 401};
    ScalarProcess p{1.2, 1.0, 0.0, 0.0};
    const TransitionKernel k(narrow, p);
    const auto wide = gaussian_grid(0.0, 1.9, narrow);
    EXPECT_THROW((void)propagate(wide, 1.0, ActionFunction::constant(narrow, 0.0), false, k, exponential()),
                 SupportOverflowError);
}

TEST(Propagate, KernelOverloadMatchesProcessOverload) {
    ScalarProcess p{1.1, 1.0, 0.0, 0.0};
    const TransitionKernel k(kGrid, p);
    const auto theta = gaussian_grid(0.5, 1.5, kGrid);
    const auto a = radial_step_action(kGrid, {0.0, 1.0, 4.0}, {0.4, 1.7});
    const auto x = propagate(theta, 0.5, a, false, k, exponential());
    const auto y = propagate(theta, 0.5, a, false, p, exponential());
    for (std::size_t j = 0; j < x.size(); ++j) {
        EXPECT_DOUBLE_EQ(x.density[j], y.density[j]);
    }
}

TEST(Kernel, AdjointComputesConditionalExpectation) {
    // E[(a e + w)^2] = a^2 e^2 + W
    ScalarProcess p{1.2, 0.5, 0.0, 0.0};
    const TransitionKernel k(kGrid, p);
    std::vector<double> g(kGrid.n_points);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = kGrid.node(i) * kGrid.node(i);
    }
    const auto eg = k.adjoint(g);
    for (double e : {0.0, 1.0, -3.3, 10.0}) {
        const auto j = kGrid.nearest(e);
        const double x = kGrid.node(j);
        EXPECT_NEAR(eg[j], 1.44 * x * x + 0.5, 1e-8) << e;
    }
}

TEST(Kernel, ForwardConservesMassInside) {
    ScalarProcess p{1.2, 1.0, 0.0, 0.0};
    const TransitionKernel k(kGrid, p);
    const auto theta = gaussian_grid(0.0, 1.0, kGrid);
    double escaped = -1.0;
    const auto out = k.forward(theta.density, escaped);
    EXPECT_NEAR(total_mass(BeliefGrid{kGrid, out}) + escaped, 1.0, 1e-12);
    EXPECT_LT(escaped, 1e-12);
}

TEST(Belief, CsvHeader) {
    std::ostringstream out;
    write_belief_csv(out, gaussian_grid(0.0, 1.0, kGrid));
    EXPECT_EQ(out.str().substr(0, 8), "e,theta\n");
}
