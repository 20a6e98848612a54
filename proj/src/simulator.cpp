#include "rse/simulator.hpp"

#include "rse/error.hpp"
#include "rse/parallel.hpp"
#include "rse/rng.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <ostream>
#include <random>

namespace rse {

std::string to_string(EstimatorMode mode) {
    return mode == EstimatorMode::closed_form ? "closed_form" : "belief_mean";
}

EstimatorMode estimator_mode_from_string(const std::string& name) {
    if (name == "closed_form") {
        return EstimatorMode::closed_form;
    }
    if (name == "belief_mean") {
        return EstimatorMode::belief_mean;
    }
    throw ConfigError(fmt::format("unknown estimator '{}' (expected closed_form or belief_mean)", name));
}

double estimate_closed_form(double a_coeff, double last_received, std::size_t steps_since, bool success,
                            double current_state) {
    if (success) {
        return current_state;
    }
    return std::pow(a_coeff, static_cast<double>(steps_since)) * last_received;
}

Simulator::Simulator(const SolverContext& ctx, const PowerPolicy& policy) : ctx_(&ctx), policy_(policy) {
    if (policy.is_baseline() && policy.baseline().kind == BaselineKind::zero_power) {
        return; // the belief is the open-loop Gaussian, whose mean is the closed-form estimate
    }
    try {
        chain_.emplace(build_chain(ctx, policy));
    } catch (const SupportOverflowError& e) {
        spdlog::warn("belief tracking disabled, the policy's beliefs leave the grid: {}", e.what());
    }
}

TrajectoryMetrics Simulator::run(const SimulationOptions& options, std::ostream* trace) const {
    if (options.horizon == 0) {
        throw PreconditionError("simulate: horizon must be >= 1");
    }
    const auto& ctx = *ctx_;
    const auto& model = ctx.model;
    const auto& tree = ctx.tree;
    const auto g = tree.gain_count();
    const double a = model.process.a_coeff;
    const bool beliefs = chain_.has_value() &&
                         (options.track_beliefs || options.estimator == EstimatorMode::belief_mean);

    CounterRng noise_rng(options.seed, options.replication, Stream::noise);
    CounterRng channel_rng(options.seed, options.replication, Stream::channel);
    CounterRng reception_rng(options.seed, options.replication, Stream::reception);
    CounterRng initial_rng(options.seed, options.replication, Stream::initial);
    std::normal_distribution<double> noise(0.0, std::sqrt(model.process.w_var));

    TrajectoryMetrics m;
    m.horizon = options.horizon;
    m.seed = options.seed;
    m.replication = options.replication;
    m.gain_occupancy.assign(g, 0.0);
    m.root_attempts.assign(g, 0);
    m.root_successes.assign(g, 0);

    double x = 0.0;
    if (model.process.init_var > 0.0) {
        std::normal_distribution<double> x0(model.process.init_mean, std::sqrt(model.process.init_var));
        x = x0(initial_rng);
    }
    double xhat_closed = x; // gamma_0 = 1
    double d = 0.0;          // x - xhat_closed; metrics use this so unstable plants stay finite
    std::size_t node = 0;
    std::size_t h = model.channel.initial_gain_index;
    std::optional<BeliefGrid> deep; // true belief once the run is past the tree
    const auto top = ThresholdAction::max_power(model.actions).expand(ctx.geometry, model.actions);
    bool warned = false;
    // zero power never transmits, not even past the tree
    const bool silent = policy_.is_baseline() && policy_.baseline().kind == BaselineKind::zero_power;

    double sum_err = 0.0;
    double sum_power = 0.0;
    double window_err = 0.0;
    std::size_t window_count = 0;
    std::uint64_t successes = 0;
    std::vector<std::uint64_t> occupancy(g, 0);

    if (trace) {
        *trace << "k,x,xhat_closed,xhat_belief,e,u,h,gamma,power_cost,error_cost\n";
    }

    for (std::size_t k = 1; k <= options.horizon; ++k) {
        const double w = noise(noise_rng);
        x = a * x + w;
        const double pred = a * xhat_closed;
        const double e = a * d + w;
        const double gain = ctx.gain(h);
        const bool tail = tree.is_tail(node);
        const double u = tail && !silent ? model.actions.max_level()
                                         : level_of(policy_, node, h, e, ctx.geometry, model.actions);
        const double q = reception_prob(model.reception, u, gain);
        const bool gamma = uniform01(reception_rng) < q;
        ++occupancy[h];
        if (node == 0) {
            ++m.root_attempts[h];
            m.root_successes[h] += gamma ? 1 : 0;
        }

        double shift = 0.0;
        if (gamma) {
            xhat_closed = x;
            d = 0.0;
            ++successes;
        } else {
            xhat_closed = pred;
            d = e;
            if (beliefs) {
                const auto s = tree.state(node, h);
                shift = chain_->terms[s].post_fail_mean;
                if (tail && deep) {
                    shift = mean(*deep); // constant action: the post-failure belief is the belief itself
                }
            }
        }
        const double xhat_belief = xhat_closed + shift;
        const double residual = options.estimator == EstimatorMode::belief_mean && beliefs ? d - shift : d;
        const double err = residual * residual;
        if (beliefs) {
            m.max_estimator_gap = std::max(m.max_estimator_gap, std::abs(shift));
        }
        sum_err += err;
        sum_power += u;
        if (trace) {
            *trace << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g}\n", k, x,
                                  xhat_closed, xhat_belief, e, u, gain, gamma ? 1 : 0,
                                  model.weights.alpha * u, err);
        }
        if (options.window > 0) {
            window_err += err;
            if (++window_count == options.window) {
                m.window_mse.push_back(window_err / static_cast<double>(options.window));
                window_err = 0.0;
                window_count = 0;
            }
        }

        // next state
        if (gamma) {
            node = 0;
            deep.reset();
        } else {
            const auto next = tree.child(node, h);
            if (beliefs && tree.is_tail(next)) {
                try {
                    if (!tail) {
                        deep = chain_->beliefs[next];
                    } else if (deep) {
                        deep = propagate(*deep, gain, top, false, *ctx.kernel, model.reception);
                    }
                } catch (const SupportOverflowError& err_overflow) {
                    ++m.belief_fallbacks;
                    if (!warned) {
                        spdlog::warn("deep belief left the grid, using the closed-form estimate: {}",
                                     err_overflow.what());
                        warned = true;
                    }
                    deep.reset();
                }
            }
            node = next;
        }
        const double r = uniform01(channel_rng);
        double acc = 0.0;
        std::size_t next_h = g - 1;
        for (std::size_t j = 0; j < g; ++j) {
            acc += ctx.transition(h, j);
            if (r < acc) {
                next_h = j;
                break;
            }
        }
        h = next_h;
    }
    const double t = static_cast<double>(options.horizon);
    m.empirical_je = sum_err / t;
    m.empirical_jw = sum_power / t;
    m.combined = m.empirical_je + model.weights.alpha * m.empirical_jw;
    m.success_rate = static_cast<double>(successes) / t;
    for (std::size_t j = 0; j < g; ++j) {
        m.gain_occupancy[j] = static_cast<double>(occupancy[j]) / t;
    }
    return m;
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    if (values.empty()) {
        return s;
    }
    const double n = static_cast<double>(values.size());
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.standard_error = std::sqrt(ss / (n - 1.0) / n);
    }
    return s;
}

ReplicationSummary summarize(std::vector<TrajectoryMetrics> runs) {
    ReplicationSummary out;
    std::vector<double> je, jw, c, sr;
    for (const auto& r : runs) {
        je.push_back(r.empirical_je);
        jw.push_back(r.empirical_jw);
        c.push_back(r.combined);
        sr.push_back(r.success_rate);
    }
    out.je = summarize(je);
    out.jw = summarize(jw);
    out.combined = summarize(c);
    out.success_rate = summarize(sr);
    out.runs = std::move(runs);
    return out;
}

ReplicationSummary replicate(const SolverContext& ctx, const PowerPolicy& policy, std::size_t replications,
                             const SimulationOptions& options, std::size_t threads,
                             std::vector<TrajectoryMetrics> done) {
    if (replications == 0) {
        throw PreconditionError("replicate: need at least 1 replication");
    }
    if (done.size() > replications) {
        throw PreconditionError("replicate: more finished runs than replications");
    }
    for (std::size_t r = 0; r < done.size(); ++r) {
        if (done[r].replication != r || done[r].seed != options.seed || done[r].horizon != options.horizon) {
            throw PreconditionError(
                fmt::format("replicate: finished run {} does not match seed {} / horizon {}", r, options.seed,
                            options.horizon));
        }
    }
    const Simulator sim(ctx, policy);
    std::vector<TrajectoryMetrics> runs(replications);
    const auto first = done.size();
    for (std::size_t r = 0; r < first; ++r) {
        runs[r] = std::move(done[r]);
    }
    parallel_for(replications - first, threads, [&](std::size_t i) {
        auto o = options;
        o.replication = first + i;
        runs[first + i] = sim.run(o);
    });
    return summarize(std::move(runs));
}

} // namespace rse
