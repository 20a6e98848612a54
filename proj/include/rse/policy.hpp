#pragma once

#include "rse/belief.hpp"
#include "rse/tree.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace rse {

/// Symmetric step action: levels[j] on t_j <= |e| < t_{j+1} (t_0 = 0, t_{m+1} = infinity),
/// with every threshold clipped to L so the action saturates beyond L.
struct ThresholdAction {
    std::vector<double> thresholds;

    bool operator==(const ThresholdAction&) const = default;

    /// Requires one threshold per nonzero level, nonnegative, nondecreasing and at most L.
    void validate(const ActionSet& actions) const;
    [[nodiscard]] double level_at(const ActionSet& actions, double e) const;
    [[nodiscard]] ActionFunction expand(const GridGeometry& geometry, const ActionSet& actions) const;

    /// u_bar everywhere.
    [[nodiscard]] static ThresholdAction max_power(const ActionSet& actions);
    /// c inside L (c must be a level), u_bar beyond.
    [[nodiscard]] static ThresholdAction constant(const ActionSet& actions, double c);
    /// 0 below t, u_bar from t on.
    [[nodiscard]] static ThresholdAction on_off(const ActionSet& actions, double t);
};

enum class BaselineKind { max_power, constant, on_off, zero_power };

[[nodiscard]] std::string to_string(BaselineKind kind);
[[nodiscard]] BaselineKind baseline_kind_from_string(const std::string& name);

/// Node-independent reference policy. zero_power ignores saturation and exists only for
/// divergence experiments in the simulator.
struct Baseline {
    BaselineKind kind = BaselineKind::max_power;
    double value = 0.0; // level for constant, threshold for on_off

    bool operator==(const Baseline&) const = default;
};

enum class PolicyMode { tabular, threshold, baseline };

[[nodiscard]] std::string to_string(PolicyMode mode);

using StateAction = std::variant<ThresholdAction, ActionFunction>;

/// Stationary map from (tree node, gain index) to an action.
class PowerPolicy {
public:
    PowerPolicy() = default;

    [[nodiscard]] static PowerPolicy from_baseline(const Baseline& baseline, std::size_t gain_count);
    /// The same action at every non-tail state; tail states get u_bar.
    [[nodiscard]] static PowerPolicy uniform(const StateAction& action, const GainTree& tree,
                                             const ActionSet& actions);
    [[nodiscard]] static PowerPolicy from_entries(std::vector<StateAction> entries, const GainTree& tree);

    [[nodiscard]] PolicyMode mode() const;
    [[nodiscard]] bool is_baseline() const { return baseline_.has_value(); }
    [[nodiscard]] const Baseline& baseline() const;
    [[nodiscard]] std::size_t gain_count() const { return gains_; }
    /// Tree depth covered by per-state entries (0 for baselines).
    [[nodiscard]] std::size_t depth() const { return depth_; }
    [[nodiscard]] const std::vector<StateAction>& entries() const { return entries_; }

    [[nodiscard]] bool covers(std::size_t node, std::size_t gain) const;
    [[nodiscard]] const StateAction& entry(std::size_t node, std::size_t gain) const;
    void set_entry(std::size_t node, std::size_t gain, StateAction action);

    bool operator==(const PowerPolicy&) const = default;

private:
    std::optional<Baseline> baseline_;
    std::size_t gains_ = 0;
    std::size_t depth_ = 0;
    std::vector<StateAction> entries_;
};

/// Concrete grid action used at (node, gain). Throws DomainError outside the policy domain.
[[nodiscard]] ActionFunction action_of(const PowerPolicy& policy, std::size_t node, std::size_t gain,
                                       const GridGeometry& geometry, const ActionSet& actions);

/// Power used at (node, gain) for a continuous innovation error e.
[[nodiscard]] double level_of(const PowerPolicy& policy, std::size_t node, std::size_t gain, double e,
                              const GridGeometry& geometry, const ActionSet& actions);

struct StructureReport {
    bool ok = true;
    std::string violation; // first violation, empty when ok
};

/// Even (exact equality on mirrored nodes and mixed cells) and nondecreasing in |e|.
[[nodiscard]] StructureReport check_symmetric_monotone(const ActionFunction& a, const GridGeometry& geometry);

struct CanonicalAction {
    ThresholdAction thresholds;
    ActionFunction action;      // expansion of `thresholds`
    bool representable = true; // false when a threshold had to move by more than one cell to respect L
    double clip_distance = 0.0;
};

/// Symmetric-monotone representative of `a` against the rearrangement of theta.
[[nodiscard]] CanonicalAction canonicalize(const ActionFunction& a, const BeliefGrid& theta,
                                           const ActionSet& actions);

/// Uniform threshold grid on [0, L] with `points` entries.
[[nodiscard]] std::vector<double> threshold_grid(const ActionSet& actions, std::size_t points);

} // namespace rse
