#include "rse/policy.hpp"

#include "rse/error.hpp"
#include "rse/rearrange.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace rse {

namespace {

std::vector<double> clipped(const std::vector<double>& t, double radius) {
    std::vector<double> out(t.size());
    std::transform(t.begin(), t.end(), out.begin(), [radius](double v) { return std::min(v, radius); });
    return out;
}

} // namespace

void ThresholdAction::validate(const ActionSet& actions) const {
    if (thresholds.size() + 1 != actions.size()) {
        throw PreconditionError(fmt::format("threshold action needs {} thresholds (got {})", actions.size() - 1,
                                            thresholds.size()));
    }
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] >= 0.0) || (i > 0 && thresholds[i] < thresholds[i - 1])) {
            throw PreconditionError("thresholds must be nonnegative and nondecreasing");
        }
    }
    if (!thresholds.empty() && thresholds.back() > actions.saturation_radius) {
        throw PreconditionError(fmt::format("last threshold {} exceeds L = {}", thresholds.back(),
                                            actions.saturation_radius));
    }
}

double ThresholdAction::level_at(const ActionSet& actions, double e) const {
    const double r = std::abs(e);
    std::size_t j = 0;
    while (j < thresholds.size() && r >= std::min(thresholds[j], actions.saturation_radius)) {
        ++j;
    }
    return actions.levels[j];
}

ActionFunction ThresholdAction::expand(const GridGeometry& geometry, const ActionSet& actions) const {
    if (thresholds.size() + 1 != actions.size()) {
        throw PreconditionError("threshold count does not match the action set");
    }
    return radial_step_action(geometry, actions.levels, clipped(thresholds, actions.saturation_radius));
}

ThresholdAction ThresholdAction::max_power(const ActionSet& actions) {
    return ThresholdAction{std::vector<double>(actions.size() - 1, 0.0)};
}

ThresholdAction ThresholdAction::constant(const ActionSet& actions, double c) {
    const auto idx = actions.index_of(c);
    ThresholdAction t;
    for (std::size_t j = 1; j < actions.size(); ++j) {
        t.thresholds.push_back(j <= idx ? 0.0 : actions.saturation_radius);
    }
    return t;
}

ThresholdAction ThresholdAction::on_off(const ActionSet& actions, double t) {
    if (!(t >= 0.0)) {
        throw PreconditionError("on_off threshold must be >= 0");
    }
    return ThresholdAction{std::vector<double>(actions.size() - 1, std::min(t, actions.saturation_radius))};
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
    case BaselineKind::max_power:
        return "max_power";
    case BaselineKind::constant:
        return "constant";
    case BaselineKind::on_off:
        return "on_off";
    case BaselineKind::zero_power:
        return "zero_power";
    }
    return "unknown";
}

BaselineKind baseline_kind_from_string(const std::string& name) {
    for (auto k : {BaselineKind::max_power, BaselineKind::constant, BaselineKind::on_off, BaselineKind::zero_power}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError(fmt::format("unknown baseline '{}'", name));
}

std::string to_string(PolicyMode mode) {
    switch (mode) {
    case PolicyMode::tabular:
        return "tabular";
    case PolicyMode::threshold:
        return "threshold";
    case PolicyMode::baseline:
        return "baseline";
    }
    return "unknown";
}

PowerPolicy PowerPolicy::from_baseline(const Baseline& baseline, std::size_t gain_count) {
    PowerPolicy p;
    p.baseline_ = baseline;
    p.gains_ = gain_count;
    return p;
}

PowerPolicy PowerPolicy::uniform(const StateAction& action, const GainTree& tree, const ActionSet& actions) {
    std::vector<StateAction> entries(tree.state_count(), action);
    for (std::size_t n = tree.level_starts()[tree.depth()]; n < tree.node_count(); ++n) {
        for (std::size_t h = 0; h < tree.gain_count(); ++h) {
            entries[tree.state(n, h)] = ThresholdAction::max_power(actions);
        }
    }
    return from_entries(std::move(entries), tree);
}

PowerPolicy PowerPolicy::from_entries(std::vector<StateAction> entries, const GainTree& tree) {
    if (entries.size() != tree.state_count()) {
        throw PreconditionError(fmt::format("policy needs {} entries (got {})", tree.state_count(), entries.size()));
    }
    PowerPolicy p;
    p.gains_ = tree.gain_count();
    p.depth_ = tree.depth();
    p.entries_ = std::move(entries);
    return p;
}

PolicyMode PowerPolicy::mode() const {
    if (baseline_) {
        return PolicyMode::baseline;
    }
    for (const auto& e : entries_) {
        if (std::holds_alternative<ActionFunction>(e)) {
            return PolicyMode::tabular;
        }
    }
    return PolicyMode::threshold;
}

const Baseline& PowerPolicy::baseline() const {
    if (!baseline_) {
        throw DomainError("policy is not a baseline");
    }
    return *baseline_;
}

bool PowerPolicy::covers(std::size_t node, std::size_t gain) const {
    if (gain >= gains_) {
        return false;
    }
    return baseline_.has_value() || node * gains_ + gain < entries_.size();
}

const StateAction& PowerPolicy::entry(std::size_t node, std::size_t gain) const {
    if (baseline_ || !covers(node, gain)) {
        throw DomainError(fmt::format("policy has no entry for node {} gain {}", node, gain));
    }
    return entries_[node * gains_ + gain];
}

void PowerPolicy::set_entry(std::size_t node, std::size_t gain, StateAction action) {
    if (baseline_ || !covers(node, gain)) {
        throw DomainError(fmt::format("policy has no entry for node {} gain {}", node, gain));
    }
    entries_[node * gains_ + gain] = std::move(action);
}

namespace {

ThresholdAction baseline_thresholds(const Baseline& b, const ActionSet& actions) {
    switch (b.kind) {
    case BaselineKind::max_power:
        return ThresholdAction::max_power(actions);
    case BaselineKind::constant:
        return ThresholdAction::constant(actions, b.value);
    case BaselineKind::on_off:
        return ThresholdAction::on_off(actions, b.value);
    case BaselineKind::zero_power:
        break;
    }
    throw DomainError("zero_power baseline has no threshold form");
}

} // namespace

ActionFunction action_of(const PowerPolicy& policy, std::size_t node, std::size_t gain,
                         const GridGeometry& geometry, const ActionSet& actions) {
    if (!policy.covers(node, gain)) {
        throw DomainError(fmt::format("policy has no entry for node {} gain {}", node, gain));
    }
    if (policy.is_baseline()) {
        if (policy.baseline().kind == BaselineKind::zero_power) {
            return ActionFunction::constant(geometry, 0.0);
        }
        return baseline_thresholds(policy.baseline(), actions).expand(geometry, actions);
    }
    const auto& e = policy.entry(node, gain);
    if (const auto* t = std::get_if<ThresholdAction>(&e)) {
        return t->expand(geometry, actions);
    }
    const auto& a = std::get<ActionFunction>(e);
    if (a.size() != geometry.n_points) {
        throw PreconditionError("tabular policy entry does not match the grid");
    }
    return a;
}

double level_of(const PowerPolicy& policy, std::size_t node, std::size_t gain, double e,
                const GridGeometry& geometry, const ActionSet& actions) {
    if (policy.is_baseline()) {
        if (policy.baseline().kind == BaselineKind::zero_power) {
            return 0.0;
        }
        return baseline_thresholds(policy.baseline(), actions).level_at(actions, e);
    }
    const auto& entry = policy.entry(node, gain);
    if (const auto* t = std::get_if<ThresholdAction>(&entry)) {
        return t->level_at(actions, e);
    }
    if (std::abs(e) > geometry.half_width) {
        return actions.max_level();
    }
    return std::get<ActionFunction>(entry).at(geometry, e);
}

StructureReport check_symmetric_monotone(const ActionFunction& a, const GridGeometry& geometry) {
    StructureReport r;
    const auto c = geometry.center();
    if (a.size() != geometry.n_points) {
        return {false, "action size does not match the grid"};
    }
    for (std::size_t k = 1; k <= c; ++k) {
        if (a.values[c + k] != a.values[c - k]) {
            return {false, fmt::format("asymmetric at e = +/-{}: {} vs {}", geometry.node(c + k), a.values[c + k],
                                       a.values[c - k])};
        }
        if (a.values[c + k] < a.values[c + k - 1]) {
            return {false, fmt::format("decreasing at |e| = {}: {} after {}", geometry.node(c + k), a.values[c + k],
                                       a.values[c + k - 1])};
        }
    }
    for (const auto& mix : a.mixes) {
        const auto mirror = 2 * c - mix.node;
        const auto it = std::find_if(a.mixes.begin(), a.mixes.end(), [&](const CellMix& m) { return m.node == mirror; });
        if (it == a.mixes.end() || it->shares != mix.shares) {
            return {false, fmt::format("mixed cell at e = {} has no mirror", geometry.node(mix.node))};
        }
        for (std::size_t s = 1; s < mix.shares.size(); ++s) {
            if (mix.shares[s].level < mix.shares[s - 1].level) {
                return {false, fmt::format("mixed cell at e = {} decreases outward", geometry.node(mix.node))};
            }
        }
        const auto k = geometry.shell_of(mix.node);
        if (k > 0 && mix.shares.front().level < a.values[c + k - 1]) {
            return {false, fmt::format("mixed cell at e = {} drops below its inner neighbour", geometry.node(mix.node))};
        }
        if (k < c && mix.shares.back().level > a.values[c + k + 1]) {
            return {false, fmt::format("mixed cell at e = {} exceeds its outer neighbour", geometry.node(mix.node))};
        }
    }
    return r;
}

CanonicalAction canonicalize(const ActionFunction& a, const BeliefGrid& theta, const ActionSet& actions) {
    const auto theta_hat = symmetric_decreasing_rearrangement(theta);
    auto radii = layer_cake_radii(a, theta, theta_hat, actions.levels);
    CanonicalAction out;
    const double L = actions.saturation_radius;
    for (auto& r : radii) {
        if (r > L) {
            out.clip_distance = std::max(out.clip_distance, r - L);
            r = L;
        }
    }
    out.representable = out.clip_distance <= theta.geometry.spacing();
    out.thresholds = ThresholdAction{radii};
    out.action = out.thresholds.expand(theta.geometry, actions);
    return out;
}

std::vector<double> threshold_grid(const ActionSet& actions, std::size_t points) {
    if (points < 2) {
        throw ConfigError("threshold grid needs at least 2 points");
    }
    std::vector<double> t(points);
    for (std::size_t i = 0; i < points; ++i) {
        t[i] = actions.saturation_radius * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return t;
}

} // namespace rse
