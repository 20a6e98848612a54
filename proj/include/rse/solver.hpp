#pragma once

#include "rse/chain.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rse {

enum class PolishMode { automatic, always, never };

[[nodiscard]] std::string to_string(PolishMode mode);
[[nodiscard]] PolishMode polish_mode_from_string(const std::string& name);

struct SolverOptions {
    std::size_t depth = 8;
    std::size_t threshold_points = 21;
    double tol_rho = 1e-6;
    std::size_t max_rounds = 200;
    /// Exact coordinate descent after policy iteration (every candidate re-evaluated on a
    /// rebuilt chain). "automatic" runs it when free states x candidates <= polish_budget.
    PolishMode polish = PolishMode::automatic;
    std::size_t polish_budget = 20000;
    /// Also consider the unrestricted per-cell optimum at every state.
    bool tabular = false;
    /// Above this many threshold tuples per state, search by coordinate descent instead.
    std::size_t enumeration_limit = 200000;
    std::size_t threads = 1;

    void validate() const;
};

/// Successor-value densities of a policy. For state s, G_s(e) is the cost-to-go of s when
/// the innovation error equals e, so that V(s) = integral of theta_node G_s. The solver uses
/// them to price a different action at s without rebuilding the chain.
struct CostToGo {
    double beta = 1.0; // 1 for average cost
    double rho = 0.0;  // 0 for discounted cost
    std::vector<double> root_next;          // per gain h: sum_h' pi(h'|h) V(root, h')
    std::vector<std::vector<double>> g;     // per state G_s
    std::vector<std::vector<double>> g_bar; // per non-tail state: E[G_child(a e + w)] - root_next(h)
};

[[nodiscard]] CostToGo cost_to_go(const SolverContext& ctx, const UnfoldedChain& chain,
                                  const std::vector<double>& values, double rho, const CostWeights& weights,
                                  double beta = 1.0);

/// One-step backup of action `a` at non-tail state s under the cost-to-go of the current policy.
[[nodiscard]] double backup_value(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg,
                                  std::size_t state, const ActionFunction& a, const CostWeights& weights);

/// Fast backups of threshold actions at one state (prefix sums over shells; exact for the
/// fractional cells produced by ThresholdAction::expand).
class ThresholdPricer {
public:
    ThresholdPricer(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg, std::size_t state,
                    const CostWeights& weights);

    [[nodiscard]] double value(const ThresholdAction& t) const;
    [[nodiscard]] double power(const ThresholdAction& t) const;

private:
    struct Moments {
        double m0 = 0, m1 = 0, m2 = 0, mg = 0;
    };
    [[nodiscard]] Moments inside(double r) const;
    void accumulate(const ThresholdAction& t, double& power, double& f0, double& f1, double& f2, double& fg) const;

    const SolverContext* ctx_;
    std::vector<Moments> prefix_; // prefix_[k] = sum over shells < k
    std::vector<double> fail_;    // 1 - q(level, gain) per level
    double alpha_ = 0.0;
    double beta_ = 1.0;
    double offset_ = 0.0; // beta * root_next - rho
};

struct Backup {
    double value = 0.0;
    ActionFunction action;
};

/// Unrestricted improvement step: node-wise argmin of the backup integrand with the conditional
/// mean of the current action held fixed (u_bar forced beyond L). Value is the exact backup.
[[nodiscard]] Backup tabular_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg,
                                    std::size_t state, const CostWeights& weights);
/// Best node-valued action for the exact backup (the conditional mean is optimised too).
[[nodiscard]] Backup exact_tabular_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg,
                                          std::size_t state, const CostWeights& weights);
/// Best threshold action: shell-wise dynamic programme over monotone level assignments, then
/// each switching radius refined continuously.
[[nodiscard]] Backup monotone_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg,
                                     std::size_t state, const CostWeights& weights);

struct ImproveOptions {
    std::vector<double> threshold_grid;
    bool tabular = false;
    std::size_t enumeration_limit = 200000;
    /// Replaces the enumerated threshold candidates when set.
    std::optional<std::vector<ThresholdAction>> candidates;
};

struct Improvement {
    PowerPolicy policy;
    std::vector<double> incumbent_value; // per state
    std::vector<double> best_value;      // per state
    std::vector<std::size_t> changed;    // states whose action changed
};

[[nodiscard]] Improvement improve_policy(const SolverContext& ctx, const UnfoldedChain& chain,
                                         const PowerPolicy& policy, const CostToGo& ctg, const CostWeights& weights,
                                         const ImproveOptions& options);

/// Every nondecreasing tuple of thresholds drawn from `grid` (lexicographic order).
[[nodiscard]] std::vector<ThresholdAction> threshold_candidates(const std::vector<double>& grid, std::size_t count);

struct PolicyEvaluation {
    UnfoldedChain chain;
    Evaluation evaluation;
};

[[nodiscard]] PolicyEvaluation evaluate(const SolverContext& ctx, const PowerPolicy& policy);

struct SolveResult {
    PowerPolicy policy;
    double rho_star = 0.0;
    Evaluation evaluation;
    std::size_t iterations = 0;
    std::size_t polish_sweeps = 0;
    bool converged = false;
    std::vector<double> rho_history; // accepted rounds
    double rho_max_power = 0.0;
    double rho_best_on_off = 0.0;
    double best_on_off_threshold = 0.0;
};

[[nodiscard]] SolveResult solve(const ModelBundle& model, const GridGeometry& geometry, const SolverOptions& options);

struct DiscountedResult {
    double beta = 0.0;
    PowerPolicy policy;
    std::vector<double> values;
    double min_value = 0.0; // m_beta
    double objective = 0.0; // stationary-weighted root values
    double residual = 0.0;
    std::size_t iterations = 0;
};

/// Discounted cost U(s) = c(s) + beta E[U(s')], minimised by policy iteration on the same chain.
[[nodiscard]] DiscountedResult solve_discounted(const ModelBundle& model, const GridGeometry& geometry, double beta,
                                                const SolverOptions& options);

struct StructureWitness {
    std::size_t state = 0;
    double tabular_value = 0.0;
    double monotone_value = 0.0;
    double exact_tabular_value = 0.0;
    [[nodiscard]] double gap() const { return monotone_value - tabular_value; }
    [[nodiscard]] double exact_gap() const { return monotone_value - exact_tabular_value; }
};

/// Per non-tail state, tabular versus monotone one-step backups under the policy's cost-to-go.
[[nodiscard]] std::vector<StructureWitness> structure_witness(const SolverContext& ctx, const PowerPolicy& policy,
                                                              const CostWeights& weights);

} // namespace rse
