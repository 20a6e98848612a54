#include "rse/solver.hpp"

#include "rse/error.hpp"
#include "rse/parallel.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rse {

namespace {

constexpr double kTieTolerance = 1e-12;
constexpr std::size_t kMeanScanPoints = 201;
constexpr int kGoldenIterations = 80;
constexpr std::size_t kMaxPolishSweeps = 50;
constexpr std::size_t kMaxCoordinatePasses = 20;

bool better(double candidate, double incumbent) {
    return candidate < incumbent - kTieTolerance * (1.0 + std::abs(incumbent));
}

bool tied(double a, double b) { return std::abs(a - b) <= kTieTolerance * (1.0 + std::abs(b)); }

double choose(std::size_t n, std::size_t k) {
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return c;
}

std::size_t candidate_count(std::size_t points, std::size_t slots) {
    const double c = choose(points + slots - 1, slots);
    return c > 1e15 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(c);
}

// Entries for every state of the context tree (baselines are spelled out).
PowerPolicy tree_policy(const SolverContext& ctx, const PowerPolicy& policy) {
    const auto& tree = ctx.tree;
    const auto& actions = ctx.model.actions;
    std::vector<StateAction> entries(tree.state_count());
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        for (std::size_t h = 0; h < tree.gain_count(); ++h) {
            auto& e = entries[tree.state(n, h)];
            if (tree.is_tail(n)) {
                e = ThresholdAction::max_power(actions);
            } else if (policy.is_baseline()) {
                const auto& b = policy.baseline();
                switch (b.kind) {
                case BaselineKind::max_power:
                    e = ThresholdAction::max_power(actions);
                    break;
                case BaselineKind::constant:
                    e = ThresholdAction::constant(actions, b.value);
                    break;
                case BaselineKind::on_off:
                    e = ThresholdAction::on_off(actions, b.value);
                    break;
                case BaselineKind::zero_power:
                    e = ActionFunction::constant(ctx.geometry, 0.0);
                    break;
                }
            } else {
                e = policy.entry(n, h);
            }
        }
    }
    return PowerPolicy::from_entries(std::move(entries), tree);
}

struct CellData {
    std::vector<double> m0, m1, m2, mg;
    std::vector<double> fail; // per level
    std::vector<bool> forced; // node beyond L
};

CellData cell_data(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg, std::size_t state) {
    const auto& g = ctx.geometry;
    const auto& theta = chain.beliefs[state / chain.tree.gain_count()];
    const auto& gb = ctg.g_bar[state];
    const auto h = state % chain.tree.gain_count();
    CellData d;
    const auto n = g.n_points;
    d.m0.resize(n);
    d.m1.resize(n);
    d.m2.resize(n);
    d.mg.resize(n);
    d.forced.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double e = g.node(j);
        const double m = g.weight(j) * theta.density[j];
        d.m0[j] = m;
        d.m1[j] = m * e;
        d.m2[j] = m * e * e;
        d.mg[j] = m * gb[j];
        d.forced[j] = std::abs(e) > ctx.model.actions.saturation_radius;
    }
    for (double level : ctx.model.actions.levels) {
        d.fail.push_back(1.0 - reception_prob(ctx.model.reception, level, ctx.gain(h)));
    }
    return d;
}

// Upper bound on the backup at a fixed conditional-mean guess m; equal to the backup when m
// is the post-failure mean of the minimising action. Writes per-node levels into `levels`.
double relaxed_cost(const SolverContext& ctx, const CellData& d, double m, double beta, bool monotone,
                    std::vector<double>* levels) {
    const auto& acts = ctx.model.actions;
    const auto nl = acts.size();
    const auto n = d.m0.size();
    auto cell = [&](std::size_t j, std::size_t l) {
        const double sq = d.m2[j] - 2.0 * m * d.m1[j] + m * m * d.m0[j];
        return ctx.model.weights.alpha * acts.levels[l] * d.m0[j] + d.fail[l] * (sq + beta * d.mg[j]);
    };
    const auto top = nl - 1;
    if (!monotone) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t best = top;
            double bv = cell(j, top);
            if (!d.forced[j]) {
                for (std::size_t l = 0; l < top; ++l) {
                    const double v = cell(j, l);
                    if (v < bv) {
                        bv = v;
                        best = l;
                    }
                }
            }
            total += bv;
            if (levels) {
                (*levels)[j] = acts.levels[best];
            }
        }
        return total;
    }
    const auto& g = ctx.geometry;
    const auto c = g.center();
    const auto shells = g.shell_count();
    // dp[k][l]: best cost of shells 0..k with level l on shell k
    std::vector<double> dp(shells * nl);
    std::vector<std::size_t> arg(shells * nl);
    for (std::size_t k = 0; k < shells; ++k) {
        const bool forced = d.forced[c + k];
        double run = std::numeric_limits<double>::infinity();
        std::size_t run_arg = 0;
        for (std::size_t l = 0; l < nl; ++l) {
            if (k > 0 && dp[(k - 1) * nl + l] < run) {
                run = dp[(k - 1) * nl + l];
                run_arg = l;
            }
            double v = cell(c + k, l) + (k > 0 ? cell(c - k, l) : 0.0);
            if (forced && l != top) {
                v = std::numeric_limits<double>::infinity();
            }
            dp[k * nl + l] = v + (k > 0 ? run : 0.0);
            arg[k * nl + l] = run_arg;
        }
    }
    std::size_t l = 0;
    for (std::size_t i = 1; i < nl; ++i) {
        if (dp[(shells - 1) * nl + i] < dp[(shells - 1) * nl + l]) {
            l = i;
        }
    }
    const double total = dp[(shells - 1) * nl + l];
    if (levels) {
        for (std::size_t k = shells; k-- > 0;) {
            (*levels)[c + k] = acts.levels[l];
            (*levels)[c - k] = acts.levels[l];
            l = arg[k * nl + l];
        }
    }
    return total;
}

// Golden-section search of each threshold over [t - width, t + width], keeping the order
// and the bound L; a few coordinate passes.
void refine_thresholds(const ThresholdPricer& pricer, double width, double radius, ThresholdAction& t) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double best = pricer.value(t);
    for (int pass = 0; pass < 3; ++pass) {
        for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
            const double lo_bound = i == 0 ? 0.0 : t.thresholds[i - 1];
            const double hi_bound = i + 1 < t.thresholds.size() ? t.thresholds[i + 1] : radius;
            double a = std::max(lo_bound, t.thresholds[i] - width);
            double b = std::min(hi_bound, t.thresholds[i] + width);
            if (!(b > a)) {
                continue;
            }
            auto at = [&](double x) {
                auto trial = t;
                trial.thresholds[i] = x;
                return pricer.value(trial);
            };
            double x1 = b - inv_phi * (b - a);
            double x2 = a + inv_phi * (b - a);
            double f1 = at(x1);
            double f2 = at(x2);
            for (int it = 0; it < kGoldenIterations; ++it) {
                if (f1 < f2) {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - inv_phi * (b - a);
                    f1 = at(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + inv_phi * (b - a);
                    f2 = at(x2);
                }
            }
            const double x = f1 < f2 ? x1 : x2;
            const double fx = std::min(f1, f2);
            if (better(fx, best)) {
                best = fx;
                t.thresholds[i] = x;
            }
        }
    }
}

Backup relaxed_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg, std::size_t state,
                      const CostWeights& weights, bool monotone, bool scan_mean) {
    const auto d = cell_data(ctx, chain, ctg, state);
    if (!scan_mean) {
        Backup out;
        out.action.values.resize(ctx.geometry.n_points);
        (void)relaxed_cost(ctx, d, chain.terms[state].post_fail_mean, ctg.beta, monotone, &out.action.values);
        out.value = backup_value(ctx, chain, ctg, state, out.action, weights);
        return out;
    }
    const auto& theta = chain.beliefs[state / chain.tree.gain_count()];
    const double mu = mean(theta);
    const double sd = std::sqrt(std::max(variance(theta), 1e-12));
    const double lo = mu - 4.0 * sd;
    const double step = 8.0 * sd / static_cast<double>(kMeanScanPoints - 1);
    auto f = [&](double m) { return relaxed_cost(ctx, d, m, ctg.beta, monotone, nullptr); };
    std::size_t best = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kMeanScanPoints; ++i) {
        const double v = f(lo + step * static_cast<double>(i));
        if (v < best_v) {
            best_v = v;
            best = i;
        }
    }
    double a = lo + step * (static_cast<double>(best) - 1.0);
    double b = lo + step * (static_cast<double>(best) + 1.0);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < kGoldenIterations; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    double m = lo + step * static_cast<double>(best);
    if (std::min(f1, f2) < best_v) {
        m = f1 < f2 ? x1 : x2;
    }
    Backup out;
    out.action.values.resize(ctx.geometry.n_points);
    (void)relaxed_cost(ctx, d, m, ctg.beta, monotone, &out.action.values);
    if (monotone) {
        // switch radii on cell boundaries, then slide each one continuously within its cells
        const auto& acts = ctx.model.actions;
        const auto& geo = ctx.geometry;
        const auto c = geo.center();
        ThresholdAction t;
        for (std::size_t j = 1; j < acts.size(); ++j) {
            double r = acts.saturation_radius;
            for (std::size_t k = 0; k < geo.shell_count(); ++k) {
                if (acts.index_of(out.action.values[c + k]) >= j) {
                    r = std::min(geo.shell_inner(k), acts.saturation_radius);
                    break;
                }
            }
            t.thresholds.push_back(r);
        }
        const ThresholdPricer pricer(ctx, chain, ctg, state, weights);
        refine_thresholds(pricer, geo.spacing(), acts.saturation_radius, t);
        out.action = t.expand(geo, acts);
    }
    out.value = backup_value(ctx, chain, ctg, state, out.action, weights);
    return out;
}

void coordinate_search(const ThresholdPricer& pricer, const std::vector<double>& grid, ThresholdAction& t,
                       double& value) {
    for (std::size_t pass = 0; pass < kMaxCoordinatePasses; ++pass) {
        bool moved = false;
        for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
            const double lo = i == 0 ? 0.0 : t.thresholds[i - 1];
            const double hi = i + 1 < t.thresholds.size() ? t.thresholds[i + 1] : grid.back();
            for (double v : grid) {
                if (v < lo || v > hi || v == t.thresholds[i]) {
                    continue;
                }
                auto trial = t;
                trial.thresholds[i] = v;
                const double q = pricer.value(trial);
                if (better(q, value)) {
                    t = trial;
                    value = q;
                    moved = true;
                }
            }
        }
        if (!moved) {
            break;
        }
    }
}

} // namespace

std::string to_string(PolishMode mode) {
    switch (mode) {
    case PolishMode::automatic:
        return "auto";
    case PolishMode::always:
        return "always";
    case PolishMode::never:
        return "never";
    }
    return "unknown";
}

PolishMode polish_mode_from_string(const std::string& name) {
    for (auto m : {PolishMode::automatic, PolishMode::always, PolishMode::never}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ConfigError(fmt::format("unknown solver.polish '{}' (expected auto, always or never)", name));
}

void SolverOptions::validate() const {
    if (depth == 0) {
        throw ConfigError("solver.depth must be >= 1");
    }
    if (threshold_points < 2) {
        throw ConfigError("solver.threshold_points must be >= 2");
    }
    if (!(tol_rho > 0.0)) {
        throw ConfigError("solver.tol_rho must be > 0");
    }
    if (max_rounds == 0) {
        throw ConfigError("solver.max_rounds must be >= 1");
    }
}

CostToGo cost_to_go(const SolverContext& ctx, const UnfoldedChain& chain, const std::vector<double>& values,
                    double rho, const CostWeights& weights, double beta) {
    const auto& tree = chain.tree;
    const auto g = tree.gain_count();
    const auto n = ctx.geometry.n_points;
    CostToGo ctg;
    ctg.beta = beta;
    ctg.rho = rho;
    ctg.root_next.assign(g, 0.0);
    for (std::size_t h = 0; h < g; ++h) {
        for (std::size_t h2 = 0; h2 < g; ++h2) {
            ctg.root_next[h] += ctx.transition(h, h2) * values[tree.state(0, h2)];
        }
    }
    ctg.g.resize(tree.state_count());
    ctg.g_bar.resize(tree.state_count());
    const auto& starts = tree.level_starts();
    for (std::size_t d = tree.depth() + 1; d-- > 0;) {
        const auto first = starts[d];
        const auto count = (starts[d + 1] - first) * g;
        parallel_for(count, ctx.threads, [&](std::size_t i) {
            const auto node = first + i / g;
            const auto h = i % g;
            const auto s = tree.state(node, h);
            if (tree.is_tail(node)) {
                ctg.g[s].assign(n, values[s]);
                return;
            }
            const auto c = tree.child(node, h);
            std::vector<double> next(n, 0.0);
            for (std::size_t h2 = 0; h2 < g; ++h2) {
                const double p = ctx.transition(h, h2);
                const auto& gc = ctg.g[tree.state(c, h2)];
                for (std::size_t j = 0; j < n; ++j) {
                    next[j] += p * gc[j];
                }
            }
            auto gb = ctx.kernel->adjoint(next);
            for (auto& v : gb) {
                v -= ctg.root_next[h];
            }
            const auto prof = action_profile(chain.actions[s], ctx.gain(h), ctx.model.reception);
            const double m = chain.terms[s].post_fail_mean;
            auto& out = ctg.g[s];
            out.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                const double f = 1.0 - prof.success[j];
                const double e = ctx.geometry.node(j) - m;
                out[j] = weights.alpha * prof.power[j] + f * e * e + beta * (ctg.root_next[h] + f * gb[j]) - rho;
            }
            ctg.g_bar[s] = std::move(gb);
        });
    }
    return ctg;
}

double backup_value(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg, std::size_t state,
                    const ActionFunction& a, const CostWeights& weights) {
    const auto g = chain.tree.gain_count();
    const auto h = state % g;
    const auto& theta = chain.beliefs[state / g];
    const auto& gb = ctg.g_bar.at(state);
    if (gb.empty()) {
        throw PreconditionError("backup_value: tail states have no alternative actions");
    }
    const auto prof = action_profile(a, ctx.gain(h), ctx.model.reception);
    const auto t = stage_terms(theta, prof);
    double fg = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        fg += ctx.geometry.weight(j) * theta.density[j] * (1.0 - prof.success[j]) * gb[j];
    }
    return weights.alpha * t.power + t.distortion + ctg.beta * (ctg.root_next[h] + fg) - ctg.rho;
}

ThresholdPricer::ThresholdPricer(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg,
                                 std::size_t state, const CostWeights& weights)
    : ctx_(&ctx), alpha_(weights.alpha), beta_(ctg.beta) {
    const auto g = chain.tree.gain_count();
    const auto h = state % g;
    const auto& theta = chain.beliefs[state / g];
    const auto& gb = ctg.g_bar.at(state);
    if (gb.empty()) {
        throw PreconditionError("ThresholdPricer: tail states have no alternative actions");
    }
    const auto& geo = ctx.geometry;
    const auto c = geo.center();
    prefix_.assign(geo.shell_count() + 1, Moments{});
    for (std::size_t k = 0; k < geo.shell_count(); ++k) {
        Moments s;
        auto add = [&](std::size_t j) {
            const double m = geo.weight(j) * theta.density[j];
            const double e = geo.node(j);
            s.m0 += m;
            s.m1 += m * e;
            s.m2 += m * e * e;
            s.mg += m * gb[j];
        };
        add(c + k);
        if (k > 0) {
            add(c - k);
        }
        prefix_[k + 1] = {prefix_[k].m0 + s.m0, prefix_[k].m1 + s.m1, prefix_[k].m2 + s.m2, prefix_[k].mg + s.mg};
    }
    for (double level : ctx.model.actions.levels) {
        fail_.push_back(1.0 - reception_prob(ctx.model.reception, level, ctx.gain(h)));
    }
    offset_ = beta_ * ctg.root_next[h] - ctg.rho;
}

ThresholdPricer::Moments ThresholdPricer::inside(double r) const {
    const auto& geo = ctx_->geometry;
    const auto shells = geo.shell_count();
    if (r <= 0.0) {
        return {};
    }
    if (r >= geo.half_width) {
        return prefix_[shells];
    }
    auto k = static_cast<std::size_t>(std::floor(r / geo.spacing() + 0.5));
    k = std::min(k, shells - 1);
    const double lo = geo.shell_inner(k);
    const double hi = geo.shell_outer(k);
    const double f = std::clamp((r - lo) / (hi - lo), 0.0, 1.0);
    const auto& a = prefix_[k];
    const auto& b = prefix_[k + 1];
    return {a.m0 + f * (b.m0 - a.m0), a.m1 + f * (b.m1 - a.m1), a.m2 + f * (b.m2 - a.m2), a.mg + f * (b.mg - a.mg)};
}

void ThresholdPricer::accumulate(const ThresholdAction& t, double& power, double& f0, double& f1, double& f2,
                                 double& fg) const {
    const auto& acts = ctx_->model.actions;
    const double L = acts.saturation_radius;
    power = f0 = f1 = f2 = fg = 0.0;
    Moments prev{};
    for (std::size_t j = 0; j <= t.thresholds.size(); ++j) {
        const Moments next = j < t.thresholds.size() ? inside(std::min(t.thresholds[j], L))
                                                     : prefix_[ctx_->geometry.shell_count()];
        const double m0 = next.m0 - prev.m0;
        const double f = fail_[j];
        power += acts.levels[j] * m0;
        f0 += f * m0;
        f1 += f * (next.m1 - prev.m1);
        f2 += f * (next.m2 - prev.m2);
        fg += f * (next.mg - prev.mg);
        prev = next;
    }
}

double ThresholdPricer::value(const ThresholdAction& t) const {
    double power, f0, f1, f2, fg;
    accumulate(t, power, f0, f1, f2, fg);
    const double distortion = f0 < kDegenerateFailure ? 0.0 : std::max(0.0, f2 - f1 * f1 / f0);
    return alpha_ * power + distortion + beta_ * fg + offset_;
}

double ThresholdPricer::power(const ThresholdAction& t) const {
    double power, f0, f1, f2, fg;
    accumulate(t, power, f0, f1, f2, fg);
    return power;
}

Backup tabular_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg, std::size_t state,
                      const CostWeights& weights) {
    return relaxed_backup(ctx, chain, ctg, state, weights, false, false);
}

Backup exact_tabular_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg,
                            std::size_t state, const CostWeights& weights) {
    return relaxed_backup(ctx, chain, ctg, state, weights, false, true);
}

Backup monotone_backup(const SolverContext& ctx, const UnfoldedChain& chain, const CostToGo& ctg, std::size_t state,
                       const CostWeights& weights) {
    return relaxed_backup(ctx, chain, ctg, state, weights, true, true);
}

std::vector<ThresholdAction> threshold_candidates(const std::vector<double>& grid, std::size_t count) {
    std::vector<ThresholdAction> out;
    std::vector<std::size_t> idx(count, 0);
    if (count == 0) {
        out.push_back(ThresholdAction{});
        return out;
    }
    while (true) {
        ThresholdAction t;
        for (auto i : idx) {
            t.thresholds.push_back(grid[i]);
        }
        out.push_back(std::move(t));
        // next nondecreasing tuple
        std::size_t pos = count;
        while (pos > 0 && idx[pos - 1] + 1 == grid.size()) {
            --pos;
        }
        if (pos == 0) {
            break;
        }
        const auto v = idx[pos - 1] + 1;
        for (std::size_t i = pos - 1; i < count; ++i) {
            idx[i] = v;
        }
    }
    return out;
}

Improvement improve_policy(const SolverContext& ctx, const UnfoldedChain& chain, const PowerPolicy& policy,
                           const CostToGo& ctg, const CostWeights& weights, const ImproveOptions& options) {
    const auto& tree = chain.tree;
    const auto slots = ctx.model.actions.size() - 1;
    const auto base = tree_policy(ctx, policy);
    std::vector<ThresholdAction> enumerated;
    const std::vector<ThresholdAction>* cands = nullptr;
    bool coordinate = false;
    if (options.candidates) {
        cands = &*options.candidates;
    } else if (candidate_count(options.threshold_grid.size(), slots) <= options.enumeration_limit) {
        enumerated = threshold_candidates(options.threshold_grid, slots);
        cands = &enumerated;
    } else {
        coordinate = true;
    }

    Improvement imp;
    imp.incumbent_value.assign(tree.state_count(), 0.0);
    imp.best_value.assign(tree.state_count(), 0.0);
    std::vector<StateAction> entries = base.entries();
    const auto free_states = tree.level_starts()[tree.depth()] * tree.gain_count();
    parallel_for(free_states, ctx.threads, [&](std::size_t s) {
        const ThresholdPricer pricer(ctx, chain, ctg, s, weights);
        const auto& incumbent = entries[s];
        double inc_q = 0.0;
        if (const auto* t = std::get_if<ThresholdAction>(&incumbent)) {
            inc_q = pricer.value(*t);
        } else {
            inc_q = backup_value(ctx, chain, ctg, s, chain.actions[s], weights);
        }
        imp.incumbent_value[s] = inc_q;

        std::optional<ThresholdAction> best;
        double best_q = std::numeric_limits<double>::infinity();
        double best_p = 0.0;
        if (coordinate) {
            ThresholdAction t = std::holds_alternative<ThresholdAction>(incumbent)
                                    ? std::get<ThresholdAction>(incumbent)
                                    : ThresholdAction::max_power(ctx.model.actions);
            for (auto& v : t.thresholds) {
                v = std::min(v, options.threshold_grid.back());
            }
            best_q = pricer.value(t);
            coordinate_search(pricer, options.threshold_grid, t, best_q);
            best = t;
        } else {
            for (const auto& c : *cands) {
                const double q = pricer.value(c);
                if (!best || better(q, best_q)) {
                    best = c;
                    best_q = q;
                    best_p = pricer.power(c);
                } else if (tied(q, best_q)) {
                    const double p = pricer.power(c);
                    if (p < best_p - 1e-15) {
                        best = c;
                        best_q = q;
                        best_p = p;
                    }
                }
            }
        }
        StateAction chosen = incumbent;
        double chosen_q = inc_q;
        if (best && better(best_q, inc_q)) {
            chosen = *best;
            chosen_q = best_q;
        }
        if (options.tabular) {
            auto tab = tabular_backup(ctx, chain, ctg, s, weights);
            if (better(tab.value, chosen_q)) {
                chosen = std::move(tab.action);
                chosen_q = tab.value;
            }
        }
        imp.best_value[s] = chosen_q;
        entries[s] = std::move(chosen);
    });
    for (std::size_t s = 0; s < free_states; ++s) {
        if (!(entries[s] == base.entries()[s])) {
            imp.changed.push_back(s);
        }
    }
    imp.policy = PowerPolicy::from_entries(std::move(entries), tree);
    return imp;
}

PolicyEvaluation evaluate(const SolverContext& ctx, const PowerPolicy& policy) {
    PolicyEvaluation pe{build_chain(ctx, policy), {}};
    pe.evaluation = evaluate_policy(ctx, pe.chain, ctx.model.weights);
    return pe;
}

namespace {

struct Incumbent {
    PowerPolicy policy;
    PolicyEvaluation pe;
    double objective = 0.0;
};

// Shared policy-iteration driver. `score` maps an evaluated policy to the minimised objective;
// `to_go` prices deviations from it.
template <class Score, class ToGo>
Incumbent iterate(const SolverContext& ctx, Incumbent cur, const SolverOptions& options, double stop_tolerance,
                  Score score, ToGo to_go, std::size_t& rounds, bool& converged, std::vector<double>& history) {
    const auto& weights = ctx.model.weights;
    ImproveOptions io{threshold_grid(ctx.model.actions, options.threshold_points), options.tabular,
                      options.enumeration_limit, std::nullopt};
    converged = false;
    rounds = 0;
    while (rounds < options.max_rounds) {
        ++rounds;
        const auto ctg = to_go(cur);
        auto imp = improve_policy(ctx, cur.pe.chain, cur.policy, ctg, weights, io);
        if (imp.changed.empty()) {
            converged = true;
            break;
        }
        auto order = imp.changed;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return imp.incumbent_value[a] - imp.best_value[a] > imp.incumbent_value[b] - imp.best_value[b];
        });
        std::optional<Incumbent> next;
        for (std::size_t take = order.size(); take >= 1; take /= 2) {
            PowerPolicy trial = cur.policy;
            if (take == order.size()) {
                trial = imp.policy;
            } else {
                for (std::size_t i = 0; i < take; ++i) {
                    const auto s = order[i];
                    trial.set_entry(s / ctx.tree.gain_count(), s % ctx.tree.gain_count(), imp.policy.entries()[s]);
                }
            }
            std::optional<PolicyEvaluation> pe;
            try {
                pe.emplace(evaluate(ctx, trial));
            } catch (const SupportOverflowError& e) {
                spdlog::debug("skipping candidate policy: {}", e.what());
                continue;
            }
            Incumbent cand{trial, std::move(*pe), 0.0};
            cand.objective = score(cand.pe);
            if (cand.objective < cur.objective) {
                next = std::move(cand);
                break;
            }
        }
        if (!next) {
            converged = true;
            break;
        }
        const double decrease = cur.objective - next->objective;
        cur = std::move(*next);
        history.push_back(cur.objective);
        spdlog::debug("round {}: objective {:.12g} ({} states changed)", rounds, cur.objective, imp.changed.size());
        if (decrease < stop_tolerance) {
            converged = true;
            break;
        }
    }
    return cur;
}

template <class Score>
std::size_t polish(const SolverContext& ctx, Incumbent& cur, const SolverOptions& options, Score score) {
    const auto slots = ctx.model.actions.size() - 1;
    const auto grid = threshold_grid(ctx.model.actions, options.threshold_points);
    const auto free_states = ctx.tree.level_starts()[ctx.tree.depth()] * ctx.tree.gain_count();
    const auto count = candidate_count(grid.size(), slots);
    if (options.polish == PolishMode::never) {
        return 0;
    }
    if (options.polish == PolishMode::automatic &&
        (count > options.polish_budget || free_states * count > options.polish_budget)) {
        return 0;
    }
    const auto cands = threshold_candidates(grid, slots);
    const auto g = ctx.tree.gain_count();
    std::size_t sweeps = 0;
    while (sweeps < kMaxPolishSweeps) {
        ++sweeps;
        bool moved = false;
        for (std::size_t s = 0; s < free_states; ++s) {
            std::vector<double> objective(cands.size(), std::numeric_limits<double>::infinity());
            parallel_for(cands.size(), ctx.threads, [&](std::size_t i) {
                StateAction c = cands[i];
                if (c == cur.policy.entries()[s]) {
                    return;
                }
                PowerPolicy trial = cur.policy;
                trial.set_entry(s / g, s % g, c);
                try {
                    objective[i] = score(evaluate(ctx, trial));
                } catch (const SupportOverflowError&) {
                }
            });
            std::size_t best = cands.size();
            double best_v = cur.objective;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                if (better(objective[i], best_v)) {
                    best = i;
                    best_v = objective[i];
                }
            }
            if (best < cands.size()) {
                PowerPolicy trial = cur.policy;
                trial.set_entry(s / g, s % g, cands[best]);
                cur = Incumbent{trial, evaluate(ctx, trial), 0.0};
                cur.objective = score(cur.pe);
                moved = true;
            }
        }
        if (!moved) {
            break;
        }
    }
    return sweeps;
}

} // namespace

SolveResult solve(const ModelBundle& model, const GridGeometry& geometry, const SolverOptions& options) {
    options.validate();
    const auto ctx = make_context(model, geometry, options.depth, options.threads);
    const auto& acts = model.actions;
    auto score = [](const PolicyEvaluation& pe) { return pe.evaluation.rho; };

    SolveResult res;
    auto start = [&](const ThresholdAction& t) {
        const auto p = PowerPolicy::uniform(t, ctx.tree, acts);
        Incumbent inc{p, evaluate(ctx, p), 0.0};
        inc.objective = score(inc.pe);
        return inc;
    };
    Incumbent cur = start(ThresholdAction::max_power(acts));
    res.rho_max_power = cur.objective;
    res.rho_best_on_off = std::numeric_limits<double>::infinity();
    for (double t : threshold_grid(acts, options.threshold_points)) {
        std::optional<Incumbent> inc;
        try {
            inc.emplace(start(ThresholdAction::on_off(acts, t)));
        } catch (const SupportOverflowError& e) {
            spdlog::debug("on_off({}) leaves the grid: {}", t, e.what());
            continue;
        }
        if (inc->objective < res.rho_best_on_off) {
            res.rho_best_on_off = inc->objective;
            res.best_on_off_threshold = t;
        }
        if (inc->objective < cur.objective) {
            cur = std::move(*inc);
        }
    }
    res.rho_history.push_back(cur.objective);

    const auto& weights = model.weights;
    auto to_go = [&](const Incumbent& inc) {
        return cost_to_go(ctx, inc.pe.chain, inc.pe.evaluation.values, inc.pe.evaluation.rho, weights, 1.0);
    };
    cur = iterate(ctx, std::move(cur), options, options.tol_rho, score, to_go, res.iterations, res.converged,
                  res.rho_history);
    const double before = cur.objective;
    res.polish_sweeps = polish(ctx, cur, options, score);
    if (cur.objective < before) {
        res.rho_history.push_back(cur.objective);
    }
    if (!res.converged) {
        spdlog::warn("policy iteration stopped after {} rounds without meeting tol_rho", res.iterations);
    }

    res.policy = cur.policy;
    res.evaluation = cur.pe.evaluation;
    res.rho_star = res.evaluation.rho;
    return res;
}

DiscountedResult solve_discounted(const ModelBundle& model, const GridGeometry& geometry, double beta,
                                  const SolverOptions& options) {
    if (!(beta > 0.0 && beta < 1.0)) {
        throw PreconditionError(fmt::format("discount factor must lie in (0, 1) (got {})", beta));
    }
    options.validate();
    const auto ctx = make_context(model, geometry, options.depth, options.threads);
    const auto& acts = model.actions;
    const auto& weights = model.weights;
    const auto stat = stationary_distribution(model.channel);
    const auto g = ctx.tree.gain_count();

    auto score = [&](const PolicyEvaluation& pe) {
        const auto d = evaluate_discounted(ctx, pe.chain, weights, beta);
        double obj = 0.0;
        for (std::size_t h = 0; h < g; ++h) {
            obj += stat(static_cast<Eigen::Index>(h)) * d.values[ctx.tree.state(0, h)];
        }
        return obj;
    };
    auto start = [&](const ThresholdAction& t) {
        const auto p = PowerPolicy::uniform(t, ctx.tree, acts);
        Incumbent inc{p, evaluate(ctx, p), 0.0};
        inc.objective = score(inc.pe);
        return inc;
    };
    Incumbent cur = start(ThresholdAction::max_power(acts));
    for (double t : threshold_grid(acts, options.threshold_points)) {
        std::optional<Incumbent> inc;
        try {
            inc.emplace(start(ThresholdAction::on_off(acts, t)));
        } catch (const SupportOverflowError&) {
            continue;
        }
        if (inc->objective < cur.objective) {
            cur = std::move(*inc);
        }
    }
    auto to_go = [&](const Incumbent& inc) {
        const auto d = evaluate_discounted(ctx, inc.pe.chain, weights, beta);
        return cost_to_go(ctx, inc.pe.chain, d.values, 0.0, weights, beta);
    };
    DiscountedResult res;
    res.beta = beta;
    bool converged = false;
    std::vector<double> history;
    cur = iterate(ctx, std::move(cur), options, 0.0, score, to_go, res.iterations, converged, history);
    (void)polish(ctx, cur, options, score);

    const auto d = evaluate_discounted(ctx, cur.pe.chain, weights, beta);
    res.policy = cur.policy;
    res.values = d.values;
    res.residual = d.residual;
    res.objective = cur.objective;
    res.min_value = *std::min_element(d.values.begin(), d.values.end());
    return res;
}

std::vector<StructureWitness> structure_witness(const SolverContext& ctx, const PowerPolicy& policy,
                                                const CostWeights& weights) {
    const auto pe = evaluate(ctx, policy);
    const auto ctg = cost_to_go(ctx, pe.chain, pe.evaluation.values, pe.evaluation.rho, weights, 1.0);
    const auto free_states = ctx.tree.level_starts()[ctx.tree.depth()] * ctx.tree.gain_count();
    std::vector<StructureWitness> out(free_states);
    parallel_for(free_states, ctx.threads, [&](std::size_t s) {
        out[s].state = s;
        out[s].tabular_value = tabular_backup(ctx, pe.chain, ctg, s, weights).value;
        out[s].monotone_value = monotone_backup(ctx, pe.chain, ctg, s, weights).value;
        out[s].exact_tabular_value = exact_tabular_backup(ctx, pe.chain, ctg, s, weights).value;
    });
    return out;
}

} // namespace rse
