#include <gtest/gtest.h>

#include "rse/error.hpp"
#include "rse/policy.hpp"

using namespace rse;

namespace {
const GridGeometry kGrid{30.0, 2001};
}

TEST(Tree, CountsAndIndexing) {
    const GainTree t(2, 8);
    EXPECT_EQ(t.node_count(), 511u);
    EXPECT_EQ(t.state_count(), 1022u);
    EXPECT_EQ(t.level_starts().front(), 0u);
    EXPECT_EQ(t.level_starts().back(), 511u);
    EXPECT_EQ(t.child(0, 1), 2u);
    EXPECT_EQ(t.parent(2), 0u);
    EXPECT_EQ(t.last_gain(2), 1u);
    EXPECT_TRUE(t.is_tail(510));
    EXPECT_EQ(t.child(510, 0), 510u);
    EXPECT_EQ(t.state(3, 1), 7u);
    const GainTree one(1, 3);
    EXPECT_EQ(one.node_count(), 4u);
    EXPECT_EQ(GainTree(3, 2).node_count(), 13u);
}

TEST(Tree, HistoryRoundTrip) {
    const GainTree t(3, 5);
    for (std::size_t n = 0; n < t.node_count(); ++n) {
        const auto h = t.history(n);
        EXPECT_EQ(h.size(), t.depth_of(n));
        std::size_t m = 0;
        for (auto g : h) {
            m = t.child(m, g);
        }
        EXPECT_EQ(m, n);
    }
}

TEST(Threshold, LevelsAndValidation) {
    const ActionSet set;
    const ThresholdAction t{{0.5, 1.0, 2.5}};
    EXPECT_NO_THROW(t.validate(set));
    EXPECT_EQ(t.level_at(set, 0.2), 0.0);
    EXPECT_EQ(t.level_at(set, -0.5), 1.0);
    EXPECT_EQ(t.level_at(set, 1.7), 2.0);
    EXPECT_EQ(t.level_at(set, -100.0), 4.0);
    EXPECT_THROW((ThresholdAction{{1.0, 0.5, 2.0}}.validate(set)), PreconditionError);
    EXPECT_THROW((ThresholdAction{{1.0, 2.0}}.validate(set)), PreconditionError);
    EXPECT_THROW((ThresholdAction{{1.0, 2.0, 7.0}}.validate(set)), PreconditionError);
    EXPECT_THROW((ThresholdAction{{-0.1, 2.0, 3.0}}.validate(set)), PreconditionError);
}

TEST(Threshold, FactoryActions) {
    const ActionSet set;
    EXPECT_EQ(ThresholdAction::max_power(set).level_at(set, 0.0), 4.0);
    EXPECT_EQ(ThresholdAction::constant(set, 2.0).level_at(set, 5.9), 2.0);
    EXPECT_EQ(ThresholdAction::constant(set, 2.0).level_at(set, 6.1), 4.0);
    const auto oo = ThresholdAction::on_off(set, 1.5);
    EXPECT_EQ(oo.level_at(set, 1.4), 0.0);
    EXPECT_EQ(oo.level_at(set, 1.5), 4.0);
}

TEST(Threshold, ExpansionIsSymmetricMonotone) {
    const ActionSet set;
    const ThresholdAction t{{0.313, 1.0, 2.777}};
    const auto a = t.expand(kGrid, set);
    EXPECT_TRUE(check_symmetric_monotone(a, kGrid).ok);
    EXPECT_NO_THROW(a.validate(kGrid, set));
    for (double e : {0.1, 0.5, 1.5, 3.0, 10.0}) {
        EXPECT_EQ(a.at(kGrid, e), t.level_at(set, e)) << e;
    }
}

TEST(Structure, DetectsAsymmetryAndDecrease) {
    auto a = ActionFunction::constant(kGrid, 4.0);
    a.values[kGrid.center() + 3] = 0.0;
    const auto r = check_symmetric_monotone(a, kGrid);
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.violation.empty());
    auto b = ActionFunction::constant(kGrid, 4.0);
    b.values[kGrid.center() + 3] = 0.0;
    b.values[kGrid.center() - 3] = 0.0;
    EXPECT_FALSE(check_symmetric_monotone(b, kGrid).ok);
}

TEST(Canonicalize, ThresholdActionIsFixedPoint) {
    const ActionSet set;
    const auto theta = gaussian_grid(0.0, 1.0, kGrid);
    const ThresholdAction t{{0.4, 0.9, 1.6}};
    const auto c = canonicalize(t.expand(kGrid, set), theta, set);
    EXPECT_TRUE(c.representable);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(c.thresholds.thresholds[i], t.thresholds[i], 1e-9);
    }
}

TEST(Baseline, Names) {
    EXPECT_EQ(baseline_kind_from_string("on_off"), BaselineKind::on_off);
    EXPECT_EQ(to_string(BaselineKind::zero_power), "zero_power");
    EXPECT_THROW((void)baseline_kind_from_string("random"), ConfigError);
}

TEST(PowerPolicy, BaselineLookups) {
    const ActionSet set;
    const auto p = PowerPolicy::from_baseline(Baseline{BaselineKind::on_off, 1.0}, 2);
    EXPECT_EQ(p.mode(), PolicyMode::baseline);
    EXPECT_EQ(level_of(p, 17, 1, 0.5, kGrid, set), 0.0);
    EXPECT_EQ(level_of(p, 17, 1, -1.5, kGrid, set), 4.0);
    const auto z = PowerPolicy::from_baseline(Baseline{BaselineKind::zero_power, 0.0}, 2);
    EXPECT_EQ(level_of(z, 0, 0, 50.0, kGrid, set), 0.0);
}

TEST(PowerPolicy, UniformEntriesAndDomain) {
    const ActionSet set;
    const GainTree tree(2, 3);
    const auto p = PowerPolicy::uniform(ThresholdAction{{1.0, 1.0, 1.0}}, tree, set);
    EXPECT_EQ(p.mode(), PolicyMode::threshold);
    EXPECT_EQ(p.depth(), 3u);
    EXPECT_EQ(level_of(p, 0, 0, 0.5, kGrid, set), 0.0);
    EXPECT_EQ(level_of(p, 14, 1, 0.5, kGrid, set), 4.0); // tail
    EXPECT_FALSE(p.covers(15, 0));
    EXPECT_THROW((void)p.entry(15, 0), DomainError);
    auto q = p;
    q.set_entry(1, 1, ActionFunction::constant(kGrid, 2.0));
    EXPECT_EQ(q.mode(), PolicyMode::tabular);
    EXPECT_FALSE(q == p);
}

TEST(ThresholdGrid, Endpoints) {
    const ActionSet set;
    const auto g = threshold_grid(set, 21);
    ASSERT_EQ(g.size(), 21u);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_DOUBLE_EQ(g.back(), 6.0);
    EXPECT_DOUBLE_EQ(g[1], 0.3);
    EXPECT_THROW((void)threshold_grid(set, 1), ConfigError);
}
