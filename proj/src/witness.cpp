#include "rse/witness.hpp"

#include <algorithm>
#include <cmath>

namespace rse {

RelationPair random_relation_pair(const WitnessSetup& setup, std::mt19937_64& rng) {
    const auto& geo = setup.geometry;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> components(1, 3);

    std::vector<double> star(geo.n_points, 0.0);
    const int m = components(rng);
    for (int i = 0; i < m; ++i) {
        const double w = 0.2 + unit(rng);
        const double var = 0.3 + 3.7 * unit(rng);
        const auto g = gaussian_grid(0.0, var, geo);
        for (std::size_t j = 0; j < geo.n_points; ++j) {
            star[j] += w * g.density[j];
        }
    }
    RelationPair pair;
    pair.theta_star = normalized_grid(geo, star);

    // whole shells only, so the region holds 2 k + 1 interior nodes of equal weight
    const double r = setup.min_inner_radius + (setup.max_inner_radius - setup.min_inner_radius) * unit(rng);
    const auto k = static_cast<std::size_t>(std::floor(r / geo.spacing()));
    pair.inner_radius = (static_cast<double>(k) + 0.5) * geo.spacing();
    const auto c = geo.center();
    std::vector<double> inner(pair.theta_star.density.begin() + static_cast<std::ptrdiff_t>(c - k),
                              pair.theta_star.density.begin() + static_cast<std::ptrdiff_t>(c + k + 1));
    double avg = 0.0;
    for (double v : inner) {
        avg += v;
    }
    avg /= static_cast<double>(inner.size());
    const double blend = unit(rng);
    for (double& v : inner) {
        v = blend * v + (1.0 - blend) * avg;
    }
    std::shuffle(inner.begin(), inner.end(), rng);
    auto theta = pair.theta_star.density;
    std::copy(inner.begin(), inner.end(), theta.begin() + static_cast<std::ptrdiff_t>(c - k));
    pair.theta = BeliefGrid{geo, std::move(theta)};
    return pair;
}

ActionFunction random_inner_action(const WitnessSetup& setup, double inner_radius, std::mt19937_64& rng) {
    const auto& geo = setup.geometry;
    const auto& levels = setup.actions.levels;
    std::uniform_int_distribution<std::size_t> level(0, levels.size() - 1);
    std::uniform_int_distribution<std::size_t> run(1, 60);
    auto a = ActionFunction::constant(geo, setup.actions.max_level());
    for (std::size_t j = 0; j < geo.n_points;) {
        const auto len = run(rng);
        const double v = levels[level(rng)];
        for (std::size_t i = j; i < std::min(j + len, geo.n_points); ++i) {
            if (std::abs(geo.node(i)) < inner_radius) {
                a.values[i] = v;
            }
        }
        j += len;
    }
    return a;
}

ReceptionModel witness_reception(ReceptionForm form) {
    ReceptionModel r;
    r.form = form;
    switch (form) {
    case ReceptionForm::exponential:
        r.scale = 2.0;
        break;
    case ReceptionForm::logistic:
        r.scale = 1.0;
        r.steepness = 3.0;
        r.midpoint = 2.0;
        break;
    case ReceptionForm::on_off:
        r.success_prob = 0.8;
        r.snr_min = 1.5;
        break;
    }
    return r;
}

namespace {

double power_integral(const BeliefGrid& theta, const ActionProfile& p) {
    return stage_terms(theta, p).power;
}

} // namespace

ConservationTrial conservation_trial(const WitnessSetup& setup, const RelationPair& pair, const ActionFunction& a,
                                     double h, const ReceptionModel& reception, const TransitionKernel& kernel) {
    ConservationTrial t;
    const auto& theta = pair.theta;
    t.post_failure_mass_error = std::abs(total_mass(post_failure(theta, h, a, reception)) - 1.0);
    t.propagate_mass_error = std::abs(total_mass(propagate(theta, h, a, false, kernel, reception)) - 1.0);
    const auto hat = symmetric_decreasing_rearrangement(theta);
    const auto sigma = rearranged_action(a, theta, hat, setup.actions);
    const auto before = action_profile(a, h, reception);
    const auto after = action_profile(sigma, h, reception);
    t.power_gap = std::abs(power_integral(theta, before) - power_integral(hat, after));
    t.success_gap = std::abs(success_prob(theta, h, a, reception) - success_prob(hat, h, sigma, reception));
    return t;
}

CostTrial cost_trial(const WitnessSetup& setup, const RelationPair& pair, const ActionFunction& a, double h,
                     const ReceptionModel& reception, const CostWeights& weights) {
    const auto sigma = rearranged_action(a, pair.theta, pair.theta_star, setup.actions);
    return {stage_cost(pair.theta, h, a, reception, weights),
            stage_cost(pair.theta_star, h, sigma, reception, weights)};
}

RelationReport propagation_trial(const WitnessSetup& setup, const RelationPair& pair, const ActionFunction& a,
                                 double h, const ReceptionModel& reception, const TransitionKernel& kernel) {
    const auto sigma = rearranged_action(a, pair.theta, pair.theta_star, setup.actions);
    const auto next = propagate(pair.theta, h, a, false, kernel, reception);
    const auto next_star = propagate(pair.theta_star, h, sigma, false, kernel, reception);
    return relation_report(next, next_star, setup.actions.saturation_radius);
}

} // namespace rse
