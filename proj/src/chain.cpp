#include "rse/chain.hpp"

#include "rse/error.hpp"
#include "rse/parallel.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <Eigen/Dense>

#include <cmath>

namespace rse {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index ix(std::size_t i) { return static_cast<Index>(i); }

std::string node_label(const GainTree& tree, std::size_t node) {
    std::string h;
    for (auto g : tree.history(node)) {
        h += h.empty() ? "" : ",";
        h += std::to_string(g);
    }
    return fmt::format("node {} (failure gains [{}])", node, h);
}

// Solves (I - beta P) x = rhs on the chain, where P is the transition matrix of the
// labelled chain. Returns x expressed through the root values: coefficients per state
// over (1, x(root, 0..g-1)).
struct RootAffine {
    std::vector<VectorXd> coef; // per state, size g + 1
};

RootAffine eliminate(const SolverContext& ctx, const UnfoldedChain& chain, const std::vector<double>& rhs,
                     double beta) {
    const auto& tree = chain.tree;
    const auto g = tree.gain_count();
    const Index nv = ix(g + 1);
    RootAffine out;
    out.coef.assign(tree.state_count(), VectorXd::Zero(nv));
    for (std::size_t n = tree.node_count(); n-- > 0;) {
        if (tree.is_tail(n)) {
            MatrixXd m = MatrixXd::Identity(ix(g), ix(g));
            MatrixXd b = MatrixXd::Zero(ix(g), nv);
            for (std::size_t h = 0; h < g; ++h) {
                const auto s = tree.state(n, h);
                const double phi = chain.terms[s].success;
                b(ix(h), 0) = rhs[s];
                for (std::size_t h2 = 0; h2 < g; ++h2) {
                    const double p = ctx.transition(h, h2);
                    m(ix(h), ix(h2)) -= beta * (1.0 - phi) * p;
                    b(ix(h), ix(1 + h2)) += beta * phi * p;
                }
            }
            Eigen::FullPivLU<MatrixXd> lu(m);
            if (!lu.isInvertible()) {
                throw PreconditionError(
                    fmt::format("chain is not unichain: {} never succeeds", node_label(tree, n)));
            }
            const MatrixXd x = lu.solve(b);
            for (std::size_t h = 0; h < g; ++h) {
                out.coef[tree.state(n, h)] = x.row(ix(h)).transpose();
            }
            continue;
        }
        for (std::size_t h = 0; h < g; ++h) {
            const auto s = tree.state(n, h);
            const double phi = chain.terms[s].success;
            const auto c = tree.child(n, h);
            VectorXd v = VectorXd::Zero(nv);
            v(0) = rhs[s];
            for (std::size_t h2 = 0; h2 < g; ++h2) {
                const double p = ctx.transition(h, h2);
                v(ix(1 + h2)) += beta * phi * p;
                v += beta * (1.0 - phi) * p * out.coef[tree.state(c, h2)];
            }
            out.coef[s] = v;
        }
    }
    return out;
}

std::vector<double> apply(const RootAffine& a, const VectorXd& roots) {
    std::vector<double> x(a.coef.size());
    for (std::size_t s = 0; s < x.size(); ++s) {
        x[s] = a.coef[s](0) + a.coef[s].tail(roots.size()).dot(roots);
    }
    return x;
}

// (P x)(s) for the labelled chain.
double expected_next(const SolverContext& ctx, const UnfoldedChain& chain, const std::vector<double>& x,
                     std::size_t n, std::size_t h) {
    const auto& tree = chain.tree;
    const double phi = chain.terms[tree.state(n, h)].success;
    const auto c = tree.child(n, h);
    double acc = 0.0;
    for (std::size_t h2 = 0; h2 < tree.gain_count(); ++h2) {
        acc += ctx.transition(h, h2) * (phi * x[tree.state(0, h2)] + (1.0 - phi) * x[tree.state(c, h2)]);
    }
    return acc;
}

} // namespace

SolverContext make_context(const ModelBundle& model, const GridGeometry& geometry, std::size_t depth,
                           std::size_t threads) {
    model.validate();
    geometry.validate();
    if (geometry.half_width <= model.actions.saturation_radius) {
        throw ConfigError(fmt::format("grid half_width {} must exceed the saturation radius {}",
                                      geometry.half_width, model.actions.saturation_radius));
    }
    const auto stability = validate_stability(model.process, model.channel, model.reception, model.actions);
    if (!stability.ok) {
        spdlog::warn("{}", stability.message());
    }
    SolverContext ctx{model,
                      geometry,
                      GainTree(model.channel.size(), depth),
                      std::make_shared<TransitionKernel>(geometry, model.process),
                      gaussian_grid(0.0, model.process.w_var, geometry),
                      resolve_threads(threads)};
    return ctx;
}

double state_cost(const StageTerms& t, const CostWeights& weights) { return weights.alpha * t.power + t.distortion; }

UnfoldedChain build_chain(const SolverContext& ctx, const PowerPolicy& policy) {
    const auto& tree = ctx.tree;
    const auto g = tree.gain_count();
    if (policy.gain_count() != g) {
        throw PreconditionError(fmt::format("policy covers {} gains, channel has {}", policy.gain_count(), g));
    }
    UnfoldedChain chain{tree, std::vector<BeliefGrid>(tree.node_count()),
                        std::vector<ActionFunction>(tree.state_count()), std::vector<StageTerms>(tree.state_count())};
    chain.beliefs[0] = ctx.root_belief;
    const auto& model = ctx.model;
    const auto top = ThresholdAction::max_power(model.actions);
    const auto& starts = tree.level_starts();
    for (std::size_t d = 0; d <= tree.depth(); ++d) {
        const auto first = starts[d];
        const auto count = (starts[d + 1] - first) * g;
        parallel_for(count, ctx.threads, [&](std::size_t i) {
            const auto n = first + i / g;
            const auto h = i % g;
            const auto s = tree.state(n, h);
            chain.actions[s] = tree.is_tail(n) ? top.expand(ctx.geometry, model.actions)
                                               : action_of(policy, n, h, ctx.geometry, model.actions);
            const auto& theta = chain.beliefs[n];
            chain.terms[s] = stage_terms(theta, action_profile(chain.actions[s], ctx.gain(h), model.reception));
            if (tree.is_tail(n)) {
                return;
            }
            auto& child = chain.beliefs[tree.child(n, h)];
            if (chain.terms[s].degenerate) {
                child = theta; // reached with probability zero
                return;
            }
            try {
                child = propagate(theta, ctx.gain(h), chain.actions[s], false, *ctx.kernel, model.reception);
            } catch (const SupportOverflowError& e) {
                throw SupportOverflowError(fmt::format("{} gain {}: {}", node_label(tree, n), h, e.what()));
            }
        });
    }
    return chain;
}

double max_row_error(const SolverContext& ctx, const UnfoldedChain& chain) {
    const auto& tree = chain.tree;
    double worst = 0.0;
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        for (std::size_t h = 0; h < tree.gain_count(); ++h) {
            const double phi = chain.terms[tree.state(n, h)].success;
            double total = 0.0;
            for (std::size_t h2 = 0; h2 < tree.gain_count(); ++h2) {
                total += ctx.transition(h, h2) * phi + ctx.transition(h, h2) * (1.0 - phi);
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
    }
    return worst;
}

Evaluation evaluate_policy(const SolverContext& ctx, const UnfoldedChain& chain, const CostWeights& weights) {
    const auto& tree = chain.tree;
    const auto g = tree.gain_count();
    const auto states = tree.state_count();
    std::vector<double> cost(states);
    for (std::size_t s = 0; s < states; ++s) {
        cost[s] = state_cost(chain.terms[s], weights);
    }

    // V = c - rho + P V. The root-value part of the elimination does not depend on the right-hand
    // side, so V = a(c) + rho a(-1) + C roots; the unknowns are z = (rho, roots) with roots(0) = 0.
    const auto with_cost = eliminate(ctx, chain, cost, 1.0);
    const auto with_rho = eliminate(ctx, chain, std::vector<double>(states, -1.0), 1.0);
    MatrixXd m = MatrixXd::Zero(ix(g + 1), ix(g + 1));
    VectorXd b = VectorXd::Zero(ix(g + 1));
    for (std::size_t h = 0; h < g; ++h) {
        const auto& ca = with_cost.coef[tree.state(0, h)];
        const auto& cb = with_rho.coef[tree.state(0, h)];
        m(ix(h), 0) = cb(0);
        for (std::size_t h2 = 0; h2 < g; ++h2) {
            m(ix(h), ix(1 + h2)) = ca(ix(1 + h2));
        }
        m(ix(h), ix(1 + h)) -= 1.0;
        b(ix(h)) = -ca(0);
    }
    m(ix(g), 1) = 1.0;
    Eigen::FullPivLU<MatrixXd> lu(m);
    if (!lu.isInvertible()) {
        throw PreconditionError("chain is not unichain: root equations are singular");
    }
    const VectorXd z = lu.solve(b);

    Evaluation ev;
    ev.rho = z(0);
    const VectorXd roots = z.tail(ix(g));
    ev.values.resize(states);
    for (std::size_t s = 0; s < states; ++s) {
        ev.values[s] = with_cost.coef[s](0) + ev.rho * with_rho.coef[s](0) + with_cost.coef[s].tail(ix(g)).dot(roots);
    }

    // Stationary distribution, affine in the root occupancies r.
    std::vector<VectorXd> occ(states, VectorXd::Zero(ix(g)));
    for (std::size_t h = 0; h < g; ++h) {
        occ[tree.state(0, h)](ix(h)) = 1.0;
    }
    std::vector<VectorXd> tail_inflow(states, VectorXd::Zero(ix(g)));
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        if (tree.is_tail(n)) {
            MatrixXd t = MatrixXd::Identity(ix(g), ix(g));
            MatrixXd in = MatrixXd::Zero(ix(g), ix(g));
            for (std::size_t h = 0; h < g; ++h) {
                in.row(ix(h)) = tail_inflow[tree.state(n, h)].transpose();
                const double fail = 1.0 - chain.terms[tree.state(n, h)].success;
                for (std::size_t h2 = 0; h2 < g; ++h2) {
                    t(ix(h2), ix(h)) -= ctx.transition(h, h2) * fail;
                }
            }
            Eigen::FullPivLU<MatrixXd> tl(t);
            if (!tl.isInvertible()) {
                throw PreconditionError(
                    fmt::format("chain is not unichain: {} never succeeds", node_label(tree, n)));
            }
            const MatrixXd p = tl.solve(in);
            for (std::size_t h = 0; h < g; ++h) {
                occ[tree.state(n, h)] = p.row(ix(h)).transpose();
            }
            continue;
        }
        for (std::size_t h = 0; h < g; ++h) {
            const auto s = tree.state(n, h);
            const double fail = 1.0 - chain.terms[s].success;
            const auto c = tree.child(n, h);
            for (std::size_t h2 = 0; h2 < g; ++h2) {
                const VectorXd flow = occ[s] * (fail * ctx.transition(h, h2));
                if (tree.is_tail(c)) {
                    tail_inflow[tree.state(c, h2)] += flow;
                } else {
                    occ[tree.state(c, h2)] += flow;
                }
            }
        }
    }
    MatrixXd bal = MatrixXd::Zero(ix(g), ix(g));
    VectorXd total = VectorXd::Zero(ix(g));
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        for (std::size_t h = 0; h < g; ++h) {
            const auto s = tree.state(n, h);
            total += occ[s];
            const double phi = chain.terms[s].success;
            for (std::size_t h2 = 0; h2 < g; ++h2) {
                bal.row(ix(h2)) += (phi * ctx.transition(h, h2)) * occ[s].transpose();
            }
        }
    }
    bal -= MatrixXd::Identity(ix(g), ix(g));
    bal.row(0) = total.transpose();
    VectorXd rhs = VectorXd::Zero(ix(g));
    rhs(0) = 1.0;
    const VectorXd r = bal.fullPivLu().solve(rhs);

    ev.occupancy.resize(states);
    for (std::size_t s = 0; s < states; ++s) {
        ev.occupancy[s] = occ[s].dot(r);
        ev.rho_stationary += ev.occupancy[s] * cost[s];
        ev.mean_power += ev.occupancy[s] * chain.terms[s].power;
        ev.mean_distortion += ev.occupancy[s] * chain.terms[s].distortion;
        if (tree.is_tail(s / g)) {
            ev.tail_occupancy += ev.occupancy[s];
        }
    }

    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        for (std::size_t h = 0; h < g; ++h) {
            const auto s = tree.state(n, h);
            const double res = cost[s] - ev.rho + expected_next(ctx, chain, ev.values, n, h) - ev.values[s];
            ev.poisson_residual = std::max(ev.poisson_residual, std::abs(res));
        }
    }
    if (std::abs(ev.rho - ev.rho_stationary) > 1e-8 * (1.0 + std::abs(ev.rho))) {
        spdlog::warn("average cost from the Poisson equation ({:.12g}) and the stationary distribution ({:.12g}) differ",
                     ev.rho, ev.rho_stationary);
    }
    return ev;
}

DiscountedEvaluation evaluate_discounted(const SolverContext& ctx, const UnfoldedChain& chain,
                                         const CostWeights& weights, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) {
        throw PreconditionError(fmt::format("discount factor must lie in (0, 1) (got {})", beta));
    }
    const auto& tree = chain.tree;
    const auto g = tree.gain_count();
    const auto states = tree.state_count();
    std::vector<double> cost(states);
    for (std::size_t s = 0; s < states; ++s) {
        cost[s] = state_cost(chain.terms[s], weights);
    }

    auto solve = [&](const std::vector<double>& rhs) {
        const auto a = eliminate(ctx, chain, rhs, beta);
        MatrixXd m = MatrixXd::Identity(ix(g), ix(g));
        VectorXd b(ix(g));
        for (std::size_t h = 0; h < g; ++h) {
            const auto& c = a.coef[tree.state(0, h)];
            m.row(ix(h)) -= c.tail(ix(g)).transpose();
            b(ix(h)) = c(0);
        }
        const VectorXd roots = m.fullPivLu().solve(b);
        return apply(a, roots);
    };
    auto residual = [&](const std::vector<double>& u, std::vector<double>& r) {
        double worst = 0.0;
        r.assign(states, 0.0);
        for (std::size_t n = 0; n < tree.node_count(); ++n) {
            for (std::size_t h = 0; h < g; ++h) {
                const auto s = tree.state(n, h);
                r[s] = cost[s] + beta * expected_next(ctx, chain, u, n, h) - u[s];
                worst = std::max(worst, std::abs(r[s]));
            }
        }
        return worst;
    };

    DiscountedEvaluation ev;
    ev.beta = beta;
    ev.values = solve(cost);
    std::vector<double> r;
    ev.residual = residual(ev.values, r);
    for (int refine = 0; refine < 3 && ev.residual > (1.0 - beta) * 1e-10; ++refine) {
        const auto correction = solve(r);
        for (std::size_t s = 0; s < states; ++s) {
            ev.values[s] += correction[s];
        }
        ev.residual = residual(ev.values, r);
    }
    return ev;
}

} // namespace rse
