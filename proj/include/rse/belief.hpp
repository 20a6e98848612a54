#pragma once

#include "rse/model.hpp"

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace rse {

/// Uniform grid on [-E, E] with an odd number of nodes; node j sits at (j - c) * spacing
/// where c is the center index, so the grid is exactly symmetric about 0.
///
/// Quadrature is trapezoidal: node j owns the cell [e_j - spacing/2, e_j + spacing/2]
/// (half cells at both ends). Grouping the cells c - k and c + k gives "shell" k, which
/// covers the radial interval [k spacing - spacing/2, k spacing + spacing/2] of |e|.
struct GridGeometry {
    double half_width = 30.0;
    std::size_t n_points = 2001;

    [[nodiscard]] double spacing() const { return half_width / static_cast<double>(center()); }
    [[nodiscard]] std::size_t center() const { return (n_points - 1) / 2; }
    [[nodiscard]] double node(std::size_t j) const;
    [[nodiscard]] double weight(std::size_t j) const;
    /// Shell index |j - c|.
    [[nodiscard]] std::size_t shell_of(std::size_t j) const;
    [[nodiscard]] std::size_t shell_count() const { return center() + 1; }
    [[nodiscard]] double shell_inner(std::size_t k) const;
    [[nodiscard]] double shell_outer(std::size_t k) const;
    /// Nearest node to e, clamped to the grid.
    [[nodiscard]] std::size_t nearest(double e) const;
    void validate() const;

    bool operator==(const GridGeometry&) const = default;

    /// Default geometry: E = 30 sqrt(W / max(1 - q(u_bar, h_min), 0.01)), widened when needed so
    /// that E >= L + 10 sqrt(W).
    [[nodiscard]] static GridGeometry default_for(const ModelBundle& model, std::size_t n_points = 2001);
};

/// Density values theta(e_j) on a grid. Value type; all operations return new grids.
struct BeliefGrid {
    GridGeometry geometry;
    std::vector<double> density;

    [[nodiscard]] std::size_t size() const { return density.size(); }
};

[[nodiscard]] BeliefGrid gaussian_grid(double mean, double var, const GridGeometry& geometry);
/// Grid with density values copied from `values` and rescaled to unit mass.
[[nodiscard]] BeliefGrid normalized_grid(const GridGeometry& geometry, std::vector<double> values);

[[nodiscard]] double total_mass(const BeliefGrid& theta);
[[nodiscard]] double mean(const BeliefGrid& theta);
[[nodiscard]] double variance(const BeliefGrid& theta);
/// Trapezoidal mass of {|e| > radius} with partial cells counted by radial fraction.
[[nodiscard]] double tail_mass(const BeliefGrid& theta, double radius);
/// Largest |theta(e_{c+k}) - theta(e_{c-k})|.
[[nodiscard]] double asymmetry(const BeliefGrid& theta);

/// Share of one grid cell that uses a given power level.
struct LevelShare {
    double level = 0.0;
    double fraction = 0.0;

    bool operator==(const LevelShare&) const = default;
};

/// A cell whose measure is split between levels (radially ordered, innermost first).
struct CellMix {
    std::size_t node = 0;
    std::vector<LevelShare> shares;

    bool operator==(const CellMix&) const = default;
};

/// Power as a function of the innovation error, sampled per grid cell.
///
/// `values[j]` is a(e_j). Cells crossed by a switching radius carry a CellMix describing how
/// their measure splits between levels; every integral uses the mix, so step functions with
/// arbitrary real switching radii integrate exactly against the cell densities.
struct ActionFunction {
    std::vector<double> values;
    std::vector<CellMix> mixes;

    [[nodiscard]] std::size_t size() const { return values.size(); }

    [[nodiscard]] static ActionFunction constant(const GridGeometry& geometry, double value);
    /// Power for a continuous e (inside a mixed cell the levels are laid out radially).
    [[nodiscard]] double at(const GridGeometry& geometry, double e) const;
    /// Throws PreconditionError unless every value is a level and |e_j| > L implies u_bar.
    void validate(const GridGeometry& geometry, const ActionSet& actions) const;

    bool operator==(const ActionFunction&) const = default;
};

/// Even step function of |e|: value step_values[i] on [radii[i-1], radii[i]) with radii[-1] = 0
/// and radii[last] = infinity. Requires nondecreasing radii and radii.size() == step_values.size() - 1.
[[nodiscard]] ActionFunction radial_step_action(const GridGeometry& geometry, const std::vector<double>& step_values,
                                                const std::vector<double>& radii);

/// Per-node effective power and success probability of an action at gain h.
struct ActionProfile {
    std::vector<double> power;
    std::vector<double> success;
};

[[nodiscard]] ActionProfile action_profile(const ActionFunction& a, double h, const ReceptionModel& reception);

/// Stage quantities of (theta, h, a) computed in one pass.
struct StageTerms {
    double success = 0.0;        ///< phi
    double power = 0.0;          ///< expected transmit power
    double distortion = 0.0;     ///< integral of (1 - q)(e - mean_plus)^2 theta
    double post_fail_mean = 0.0; ///< mean of the post-failure belief (0 when degenerate)
    bool degenerate = false;     ///< 1 - phi < 1e-12
};

[[nodiscard]] StageTerms stage_terms(const BeliefGrid& theta, const ActionProfile& profile);

[[nodiscard]] double success_prob(const BeliefGrid& theta, double h, const ActionFunction& a,
                                  const ReceptionModel& reception);
[[nodiscard]] BeliefGrid post_failure(const BeliefGrid& theta, double h, const ActionFunction& a,
                                      const ReceptionModel& reception);
[[nodiscard]] double stage_cost(const BeliefGrid& theta, double h, const ActionFunction& a,
                                const ReceptionModel& reception, const CostWeights& weights);

/// Sparse transition kernel of e' = a e + w on a fixed grid:
/// K(i, j) = N(e_i - a e_j; 0, W). Built once and shared read-only.
class TransitionKernel {
public:
    TransitionKernel(const GridGeometry& geometry, const ScalarProcess& process);

    [[nodiscard]] const GridGeometry& geometry() const { return geometry_; }
    [[nodiscard]] const ScalarProcess& process() const { return process_; }

    /// Density of a e + w for e distributed as `density` (not renormalized).
    /// `escaped` receives the mass carried outside [-E, E].
    [[nodiscard]] std::vector<double> forward(const std::vector<double>& density, double& escaped) const;
    /// (K^T g)(e_j) = sum_i w_i g_i K(i, j), i.e. E[g(a e_j + w)] by quadrature.
    [[nodiscard]] std::vector<double> adjoint(const std::vector<double>& g) const;

private:
    GridGeometry geometry_;
    ScalarProcess process_;
    std::vector<std::size_t> first_;   // first target node per source
    std::vector<std::size_t> offset_;  // into values_, size n + 1
    std::vector<double> values_;
    std::vector<double> leak_;         // 1 - sum_i w_i K(i, j)
};

/// Threshold for escaped mass before propagate fails.
inline constexpr double kOverflowTolerance = 1e-6;
/// 1 - phi below this is treated as a null failure event.
inline constexpr double kDegenerateFailure = 1e-12;

/// One-step belief update. gamma = true gives the N(0, W) reset; otherwise the post-failure
/// belief is pushed through e' = a e + w and renormalized.
[[nodiscard]] BeliefGrid propagate(const BeliefGrid& theta, double h, const ActionFunction& a, bool gamma,
                                   const TransitionKernel& kernel, const ReceptionModel& reception);
[[nodiscard]] BeliefGrid propagate(const BeliefGrid& theta, double h, const ActionFunction& a, bool gamma,
                                   const ScalarProcess& process, const ReceptionModel& reception);

/// CSV with header "e,theta".
void write_belief_csv(std::ostream& out, const BeliefGrid& theta);

} // namespace rse
