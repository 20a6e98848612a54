#pragma once

#include "rse/belief.hpp"
#include "rse/policy.hpp"
#include "rse/tree.hpp"

#include <memory>
#include <vector>

namespace rse {

/// Read-only data shared by every chain built for one model and grid.
struct SolverContext {
    ModelBundle model;
    GridGeometry geometry;
    GainTree tree;
    std::shared_ptr<const TransitionKernel> kernel;
    BeliefGrid root_belief;
    std::size_t threads = 1;

    [[nodiscard]] double gain(std::size_t h) const { return model.channel.gains[h]; }
    [[nodiscard]] double transition(std::size_t h, std::size_t next) const {
        return model.channel.transition(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(next));
    }
};

/// Validates the model, warns when the stability condition fails and builds the kernel.
[[nodiscard]] SolverContext make_context(const ModelBundle& model, const GridGeometry& geometry, std::size_t depth,
                                         std::size_t threads = 1);

/// Failure-run chain labelled with the beliefs and stage quantities of one policy.
/// State s = node * gains + gain. From s, success leads to (root, h') and failure to
/// (child(node, gain), h'), both weighted by the channel transition pi(h' | gain).
struct UnfoldedChain {
    GainTree tree;
    std::vector<BeliefGrid> beliefs;     // per node
    std::vector<ActionFunction> actions; // per state
    std::vector<StageTerms> terms;       // per state
};

/// Forward pass labelling node beliefs under `policy`; tail states use u_bar.
/// SupportOverflowError names the offending node.
[[nodiscard]] UnfoldedChain build_chain(const SolverContext& ctx, const PowerPolicy& policy);

/// Largest |sum of outgoing probabilities - 1| over states.
[[nodiscard]] double max_row_error(const SolverContext& ctx, const UnfoldedChain& chain);

[[nodiscard]] double state_cost(const StageTerms& t, const CostWeights& weights);

struct Evaluation {
    double rho = 0.0;               // from the Poisson equation
    double rho_stationary = 0.0;    // sum of occupancy * cost
    std::vector<double> values;     // relative values, V(root, gain 0) = 0
    std::vector<double> occupancy;  // stationary distribution over states
    double tail_occupancy = 0.0;
    double poisson_residual = 0.0;  // max |c - rho + E[V'] - V|
    double mean_power = 0.0;
    double mean_distortion = 0.0;
};

/// Exact average cost of the chain by structured elimination along the tree.
/// Throws PreconditionError when the chain is not unichain.
[[nodiscard]] Evaluation evaluate_policy(const SolverContext& ctx, const UnfoldedChain& chain,
                                         const CostWeights& weights);

struct DiscountedEvaluation {
    double beta = 0.0;
    std::vector<double> values; // U(s) = c(s) + beta E[U(s')]
    double residual = 0.0;      // max |T U - U|
};

[[nodiscard]] DiscountedEvaluation evaluate_discounted(const SolverContext& ctx, const UnfoldedChain& chain,
                                                       const CostWeights& weights, double beta);

} // namespace rse
