#include <gtest/gtest.h>

#include "rse/error.hpp"
#include "rse/rng.hpp"
#include "rse/simulator.hpp"
#include "rse/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

using namespace rse;

namespace {

struct Fixture {
    ModelBundle model = canonical_model();
    SolverContext ctx = make_context(model, GridGeometry::default_for(model, 801), 4);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

// Transmit u_bar only for e >= 0 inside L.
PowerPolicy one_sided_policy(const SolverContext& ctx) {
    const auto& geo = ctx.geometry;
    auto a = ActionFunction::constant(geo, 4.0);
    for (std::size_t j = 0; j < geo.n_points; ++j) {
        if (geo.node(j) < 0.0 && geo.node(j) >= -ctx.model.actions.saturation_radius) {
            a.values[j] = 0.0;
        }
    }
    return PowerPolicy::uniform(a, ctx.tree, ctx.model.actions);
}

bool within_three_se(double value, const MetricSummary& s, double target) {
    return std::abs(value - target) <= 3.0 * s.standard_error + 1e-15;
}

} // namespace

TEST(Rng, ReproducibleAndIndependentStreams) {
    CounterRng a(7, 0, Stream::noise), b(7, 0, Stream::noise), c(7, 0, Stream::channel), d(7, 1, Stream::noise);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        EXPECT_NE(x, c());
        EXPECT_NE(x, d());
    }
    EXPECT_EQ(a.counter(), 100u);
}

TEST(Rng, UniformMoments) {
    CounterRng r(1, 0, Stream::reception);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = uniform01(r);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sq += u * u;
    }
    // mean 1/2 with standard error sqrt(1/12 / n)
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
    EXPECT_NEAR(sq / n, 1.0 / 3.0, 0.005);
}

TEST(Estimator, ClosedForm) {
    EXPECT_DOUBLE_EQ(estimate_closed_form(1.2, 2.0, 3, false, 9.0), 1.2 * 1.2 * 1.2 * 2.0);
    EXPECT_DOUBLE_EQ(estimate_closed_form(1.2, 2.0, 3, true, 9.0), 9.0);
    EXPECT_EQ(estimator_mode_from_string("belief_mean"), EstimatorMode::belief_mean);
    EXPECT_THROW((void)estimator_mode_from_string("kalman"), ConfigError);
}

TEST(Simulate, GainOccupancyMatchesStationary) {
    const auto& f = fixture();
    SimulationOptions o;
    o.horizon = 50000;
    const auto s = replicate(f.ctx, PowerPolicy::from_baseline(Baseline{}, 2), 20, o, 1);
    std::vector<double> occ;
    for (const auto& r : s.runs) {
        occ.push_back(r.gain_occupancy[0]);
    }
    const auto m = summarize(occ);
    EXPECT_TRUE(within_three_se(m.mean, m, 0.6)) << m.mean << " +- " << m.standard_error;
}

TEST(Simulate, RootSuccessRateMatchesBelief) {
    const auto& f = fixture();
    const auto policy = PowerPolicy::uniform(ThresholdAction{{0.5, 1.0, 2.0}}, f.ctx.tree, f.model.actions);
    SimulationOptions o;
    o.horizon = 50000;
    const auto s = replicate(f.ctx, policy, 20, o, 1);
    for (std::size_t h = 0; h < 2; ++h) {
        std::vector<double> rate;
        for (const auto& r : s.runs) {
            rate.push_back(static_cast<double>(r.root_successes[h]) / static_cast<double>(r.root_attempts[h]));
        }
        const auto m = summarize(rate);
        // e ~ N(0, 1) at the root: phi = sum over bands of q(level) P(t_j <= |e| < t_j+1)
        const std::vector<double> t{0.0, 0.5, 1.0, 2.0, std::numeric_limits<double>::infinity()};
        double phi = 0.0;
        for (std::size_t j = 0; j + 1 < t.size(); ++j) {
            const double band = std::erfc(t[j] / std::sqrt(2.0)) - std::erfc(t[j + 1] / std::sqrt(2.0));
            phi += band * reception_prob(f.model.reception, f.model.actions.levels[j], f.model.channel.gains[h]);
        }
        EXPECT_TRUE(within_three_se(m.mean, m, phi)) << h << ": " << m.mean << " +- " << m.standard_error << " vs " << phi;
    }
}

TEST(Simulate, CertainSuccessHasNoVariance) {
    auto m = canonical_model();
    m.reception.form = ReceptionForm::on_off;
    const auto ctx = make_context(m, GridGeometry::default_for(m, 801), 3);
    SimulationOptions o;
    o.horizon = 2000;
    const auto s = replicate(ctx, PowerPolicy::from_baseline(Baseline{}, 2), 5, o, 1);
    EXPECT_EQ(s.jw.mean, 4.0);
    EXPECT_EQ(s.jw.standard_error, 0.0);
    EXPECT_EQ(s.je.mean, 0.0);
    EXPECT_EQ(s.success_rate.mean, 1.0);
}

TEST(Simulate, StandardErrorShrinks) {
    const auto& f = fixture();
    SimulationOptions o;
    o.horizon = 100000;
    const auto s = replicate(f.ctx, PowerPolicy::from_baseline(Baseline{BaselineKind::on_off, 1.2}, 2), 50, o, 1);
    EXPECT_LT(s.combined.standard_error, 0.02 * s.combined.mean);
}

TEST(Simulate, DistinctSeedsDistinctTraces) {
    const auto& f = fixture();
    const Simulator sim(f.ctx, PowerPolicy::from_baseline(Baseline{}, 2));
    SimulationOptions o;
    o.horizon = 50;
    std::ostringstream a, b;
    (void)sim.run(o, &a);
    o.seed = 2;
    (void)sim.run(o, &b);
    const auto text = a.str();
    EXPECT_NE(text, b.str());
    EXPECT_EQ(text.substr(0, text.find('\n')), "k,x,xhat_closed,xhat_belief,e,u,h,gamma,power_cost,error_cost");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 51);
}

TEST(Simulate, ResumeAndThreadsAreDeterministic) {
    const auto& f = fixture();
    const auto policy = PowerPolicy::from_baseline(Baseline{BaselineKind::constant, 2.0}, 2);
    SimulationOptions o;
    o.horizon = 5000;
    o.window = 1000;
    const auto full = replicate(f.ctx, policy, 6, o, 1);
    const auto par = replicate(f.ctx, policy, 6, o, 4);
    std::vector<TrajectoryMetrics> head(full.runs.begin(), full.runs.begin() + 2);
    const auto resumed = replicate(f.ctx, policy, 6, o, 3, head);
    for (std::size_t r = 0; r < 6; ++r) {
        EXPECT_EQ(full.runs[r].combined, par.runs[r].combined);
        EXPECT_EQ(full.runs[r].combined, resumed.runs[r].combined);
        EXPECT_EQ(full.runs[r].window_mse, resumed.runs[r].window_mse);
    }
    EXPECT_EQ(full.combined.mean, par.combined.mean);
    EXPECT_THROW((void)replicate(f.ctx, policy, 1, o, 1, head), PreconditionError);
}

TEST(Simulate, EstimatorsAgreeForSymmetricPolicy) {
    const auto& f = fixture();
    const auto policy = PowerPolicy::uniform(ThresholdAction{{0.5, 1.0, 2.0}}, f.ctx.tree, f.model.actions);
    const Simulator sim(f.ctx, policy);
    SimulationOptions o;
    o.horizon = 20000;
    o.track_beliefs = true;
    const auto closed = sim.run(o);
    EXPECT_LE(closed.max_estimator_gap, 1e-8);
    o.estimator = EstimatorMode::belief_mean;
    EXPECT_NEAR(sim.run(o).empirical_je, closed.empirical_je, 1e-8);
}

TEST(Simulate, EstimatorsDifferForOneSidedPolicy) {
    const auto& f = fixture();
    const Simulator sim(f.ctx, one_sided_policy(f.ctx));
    SimulationOptions o;
    o.horizon = 20000;
    o.track_beliefs = true;
    const auto closed = sim.run(o);
    EXPECT_GT(closed.max_estimator_gap, 10.0 * f.ctx.geometry.spacing());
    o.estimator = EstimatorMode::belief_mean;
    // the conditional mean is the better estimate
    EXPECT_LT(sim.run(o).empirical_je, closed.empirical_je);
}

TEST(Simulate, ZeroPowerDiverges) {
    const auto& f = fixture();
    const Simulator sim(f.ctx, PowerPolicy::from_baseline(Baseline{BaselineKind::zero_power, 0.0}, 2));
    SimulationOptions o;
    o.horizon = 400;
    o.window = 40;
    const auto m = sim.run(o);
    EXPECT_EQ(m.empirical_jw, 0.0);
    EXPECT_EQ(m.success_rate, 0.0);
    ASSERT_EQ(m.window_mse.size(), 10u);
    for (std::size_t i = 1; i < m.window_mse.size(); ++i) {
        EXPECT_GT(m.window_mse[i], m.window_mse[i - 1]);
    }
}

TEST(Simulate, MaxPowerStaysBounded) {
    const auto& f = fixture();
    const Simulator sim(f.ctx, PowerPolicy::from_baseline(Baseline{}, 2));
    SimulationOptions o;
    o.horizon = 200000;
    o.window = 20000;
    const auto m = sim.run(o);
    for (double w : m.window_mse) {
        EXPECT_LT(w, 5.0);
    }
}

TEST(Simulate, RejectsEmptyHorizon) {
    const auto& f = fixture();
    const Simulator sim(f.ctx, PowerPolicy::from_baseline(Baseline{}, 2));
    SimulationOptions o;
    o.horizon = 0;
    EXPECT_THROW((void)sim.run(o), PreconditionError);
}
