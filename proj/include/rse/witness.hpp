#pragma once

#include "rse/rearrange.hpp"

#include <random>

namespace rse {

/// Randomized inputs for the rearrangement identities and the relation-preservation checks.
///
/// theta_star is a centered Gaussian mixture (even, unimodal). theta equals theta_star for
/// |e| > inner_radius; inside, theta_star is blended toward its mean over the region and the
/// node values are shuffled, so theta is majorized by theta_star with identical tails.
struct RelationPair {
    BeliefGrid theta;
    BeliefGrid theta_star;
    double inner_radius = 0.0;
};

struct WitnessSetup {
    GridGeometry geometry{30.0, 2001};
    ScalarProcess process{};
    ActionSet actions{{0.0, 1.0, 2.0, 4.0}, 20.0, 1.0};
    double min_inner_radius = 2.0;
    double max_inner_radius = 8.0;
};

[[nodiscard]] RelationPair random_relation_pair(const WitnessSetup& setup, std::mt19937_64& rng);

/// Random piecewise-constant action inside the pair's inner radius, u_bar outside it.
[[nodiscard]] ActionFunction random_inner_action(const WitnessSetup& setup, double inner_radius,
                                                 std::mt19937_64& rng);

/// A reception surface of the given form with parameters that exercise every level.
[[nodiscard]] ReceptionModel witness_reception(ReceptionForm form);

struct ConservationTrial {
    double post_failure_mass_error = 0.0; // |mass(theta+) - 1|
    double propagate_mass_error = 0.0;    // |mass(phi(theta, h, a, 0)) - 1|
    double power_gap = 0.0;               // |int a theta - int a_sigma theta_hat|
    double success_gap = 0.0;             // |int q(a) theta - int q(a_sigma) theta_hat|
};

/// theta_hat is the symmetric decreasing rearrangement of the pair's theta.
[[nodiscard]] ConservationTrial conservation_trial(const WitnessSetup& setup, const RelationPair& pair,
                                                   const ActionFunction& a, double h,
                                                   const ReceptionModel& reception, const TransitionKernel& kernel);

struct CostTrial {
    double cost = 0.0;            // C(theta, h, a)
    double rearranged_cost = 0.0; // C(theta_star, h, a_sigma)
    [[nodiscard]] double margin() const { return cost - rearranged_cost; }
};

[[nodiscard]] CostTrial cost_trial(const WitnessSetup& setup, const RelationPair& pair, const ActionFunction& a,
                                   double h, const ReceptionModel& reception, const CostWeights& weights);

/// Relation between phi(theta, h, a, 0) and phi(theta_star, h, a_sigma, 0) at radius L.
[[nodiscard]] RelationReport propagation_trial(const WitnessSetup& setup, const RelationPair& pair,
                                               const ActionFunction& a, double h, const ReceptionModel& reception,
                                               const TransitionKernel& kernel);

} // namespace rse
