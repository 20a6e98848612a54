#include <gtest/gtest.h>

#include "rse/error.hpp"
#include "rse/model.hpp"

#include <cmath>

using namespace rse;

TEST(Reception, ExponentialClosedForm) {
    ReceptionModel r;
    r.scale = 2.0;
    EXPECT_NEAR(reception_prob(r, 4.0, 0.5), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_EQ(reception_prob(r, 0.0, 0.5), 0.0);
}

TEST(Reception, LogisticIsNormalized) {
    ReceptionModel r;
    r.form = ReceptionForm::logistic;
    r.steepness = 3.0;
    r.midpoint = 2.0;
    const auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    const double expected = (s(3.0 * (1.5 - 2.0)) - s(-6.0)) / (1.0 - s(-6.0));
    EXPECT_NEAR(reception_prob(r, 3.0, 0.5), expected, 1e-14);
    EXPECT_EQ(reception_prob(r, 0.0, 2.0), 0.0);
    EXPECT_NEAR(reception_prob(r, 1e6, 2.0), 1.0, 1e-12);
}

TEST(Reception, OnOffThreshold) {
    ReceptionModel r;
    r.form = ReceptionForm::on_off;
    r.success_prob = 0.8;
    r.snr_min = 1.5;
    EXPECT_EQ(reception_prob(r, 2.0, 0.5), 0.0);
    EXPECT_EQ(reception_prob(r, 4.0, 0.5), 0.8);
    EXPECT_EQ(reception_prob(r, 0.0, 100.0), 0.0);
}

TEST(Reception, MonotoneInPowerAndGain) {
    for (auto form : {ReceptionForm::exponential, ReceptionForm::logistic, ReceptionForm::on_off}) {
        ReceptionModel r;
        r.form = form;
        for (double h : {0.25, 0.5, 1.0, 2.0}) {
            double prev = 0.0;
            for (int k = 0; k <= 80; ++k) {
                const double q = reception_prob(r, 0.05 * k, h);
                EXPECT_GE(q, prev);
                EXPECT_GE(q, reception_prob(r, 0.05 * k, h / 2.0));
                prev = q;
            }
        }
    }
}

TEST(Reception, RejectsNegativePowerAndGain) {
    ReceptionModel r;
    EXPECT_THROW((void)reception_prob(r, -1.0, 1.0), PreconditionError);
    EXPECT_THROW((void)reception_prob(r, 1.0, 0.0), PreconditionError);
}

TEST(Reception, FormNames) {
    EXPECT_EQ(reception_form_from_string("logistic"), ReceptionForm::logistic);
    EXPECT_EQ(to_string(ReceptionForm::on_off), "on_off");
    EXPECT_THROW((void)reception_form_from_string("rayleigh"), ConfigError);
}

TEST(Channel, CanonicalStationaryDistribution) {
    // two-state balance: pi_0 * 0.2 = pi_1 * 0.3
    const auto pi = stationary_distribution(canonical_model().channel);
    EXPECT_NEAR(pi(0), 0.6, 1e-12);
    EXPECT_NEAR(pi(1), 0.4, 1e-12);
}

TEST(Channel, ThreeStateMatchesPowerIteration) {
    FadingChannel c;
    c.gains = {0.2, 1.0, 3.0};
    c.transition.resize(3, 3);
    c.transition << 0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.25, 0.25, 0.5;
    Eigen::RowVector3d p(1.0, 0.0, 0.0);
    for (int i = 0; i < 2000; ++i) {
        p = p * c.transition;
    }
    const auto pi = stationary_distribution(c);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(pi(i), p(i), 1e-12);
    }
}

TEST(Channel, DetectsReducibleAndPeriodicChains) {
    FadingChannel c;
    c.gains = {0.5, 2.0};
    c.transition.resize(2, 2);
    c.transition << 1.0, 0.0, 0.3, 0.7;
    EXPECT_FALSE(validate_channel(c).ok);
    EXPECT_THROW((void)stationary_distribution(c), PreconditionError);
    c.transition << 0.0, 1.0, 1.0, 0.0;
    EXPECT_FALSE(validate_channel(c).ok);
    c.transition << 0.8, 0.2, 0.3, 0.7;
    EXPECT_TRUE(validate_channel(c).ok);
}

TEST(Channel, StructuralValidation) {
    FadingChannel c;
    c.gains = {2.0, 0.5};
    c.transition = Eigen::MatrixXd::Constant(2, 2, 0.5);
    EXPECT_THROW(c.validate(), ConfigError);
    c.gains = {0.5, 2.0};
    c.transition(0, 0) = 0.6;
    EXPECT_THROW(c.validate(), ConfigError);
    c.transition(0, 0) = 0.5;
    c.initial_gain_index = 2;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Stability, CanonicalMargin) {
    const auto m = canonical_model();
    const auto s = validate_stability(m.process, m.channel, m.reception, m.actions);
    EXPECT_TRUE(s.ok);
    EXPECT_NEAR(s.max_success, 1.0 - std::exp(-2.0), 1e-15);
    EXPECT_NEAR(s.bound, 1.0 - 1.0 / 1.44, 1e-15);
}

TEST(Stability, FailsForWeakChannel) {
    auto m = canonical_model();
    m.process.a_coeff = 3.0;
    m.reception.scale = 10.0;
    const auto s = validate_stability(m.process, m.channel, m.reception, m.actions);
    EXPECT_FALSE(s.ok);
    EXPECT_LT(s.margin(), 0.0);
}

TEST(Model, ValidationErrors) {
    auto m = canonical_model();
    m.process.w_var = 0.0;
    EXPECT_THROW(m.validate(), ConfigError);
    m = canonical_model();
    m.actions.levels = {1.0, 2.0};
    EXPECT_THROW(m.validate(), ConfigError);
    m = canonical_model();
    m.actions.levels = {0.0, 2.0, 1.0};
    EXPECT_THROW(m.validate(), ConfigError);
    m = canonical_model();
    m.weights.alpha = -0.1;
    EXPECT_THROW(m.validate(), ConfigError);
    EXPECT_NO_THROW(canonical_model().validate());
}

TEST(ActionSet, Lookup) {
    const ActionSet a;
    EXPECT_EQ(a.index_of(2.0), 2u);
    EXPECT_TRUE(a.contains(4.0));
    EXPECT_FALSE(a.contains(3.0));
    EXPECT_THROW((void)a.index_of(3.0), DomainError);
    EXPECT_EQ(a.max_level(), 4.0);
}
