#include "rse/error.hpp"
#include "rse/io.hpp"
#include "rse/parallel.hpp"
#include "rse/witness.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace rse;

enum Exit { ok = 0, validation = 1, no_convergence = 2, io_config = 3 };

struct Globals {
    std::size_t threads = 1;
    std::optional<std::uint64_t> seed;
    std::string log_level = "warn";
};

RunConfig load(const std::string& path, const Globals& g) {
    auto config = load_config(path);
    if (g.seed) {
        config.simulate.seed = *g.seed;
    }
    return config;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path));
    }
    return out;
}

/// Baselines have no depth of their own and use the configured one.
SolverContext context_for(const RunConfig& config, const PowerPolicy& policy, std::size_t threads) {
    auto depth = config.solver.depth;
    if (!policy.is_baseline() && policy.depth() != depth) {
        spdlog::info("using the policy's depth {} instead of solver.depth {}", policy.depth(), depth);
        depth = policy.depth();
    }
    return make_context(config.model, config.grid, depth, threads);
}

PowerPolicy load_policy(const std::string& policy_path, const std::string& baseline, const RunConfig& config) {
    if (!policy_path.empty() && !baseline.empty()) {
        throw ConfigError("give either --policy or --baseline, not both");
    }
    if (!baseline.empty()) {
        const auto colon = baseline.find(':');
        Baseline b{baseline_kind_from_string(baseline.substr(0, colon)), 0.0};
        if (colon != std::string::npos) {
            try {
                b.value = std::stod(baseline.substr(colon + 1));
            } catch (const std::exception&) {
                throw ConfigError(fmt::format("--baseline: bad value in '{}'", baseline));
            }
        }
        return PowerPolicy::from_baseline(b, config.model.channel.size());
    }
    if (policy_path.empty()) {
        throw ConfigError("a policy is required (--policy FILE or --baseline KIND[:VALUE])");
    }
    const auto policy = policy_from_json(read_json_file(policy_path), config.model.actions);
    if (policy.gain_count() != config.model.channel.size()) {
        throw ConfigError(fmt::format("policy has {} gains, the config has {}", policy.gain_count(),
                                      config.model.channel.size()));
    }
    return policy;
}

std::string policy_label(const std::string& policy_path, const std::string& baseline) {
    return baseline.empty() ? policy_path : "baseline " + baseline;
}

int run_validate(const RunConfig& config) {
    const auto& m = config.model;
    bool all = true;
    const auto row = [&](const std::string& check, bool pass, const std::string& detail) {
        all = all && pass;
        fmt::print("{:<22} {:<5} {}\n", check, pass ? "pass" : "FAIL", detail);
    };
    const auto channel = validate_channel(m.channel);
    row("channel", channel.ok, channel.message);
    if (channel.ok) {
        const auto pi = stationary_distribution(m.channel);
        std::string occupancy;
        for (Eigen::Index i = 0; i < pi.size(); ++i) {
            occupancy += fmt::format("{}{:.6g}", i == 0 ? "" : ", ", pi(i));
        }
        row("stationary gains", true, "[" + occupancy + "]");
    }
    const auto stability = validate_stability(m.process, m.channel, m.reception, m.actions);
    row("stability", stability.ok,
        fmt::format("q(u_bar, h_min) = {:.6g}, bound 1 - 1/a^2 = {:.6g}, margin {:.6g}", stability.max_success,
                    stability.bound, stability.margin()));
    row("unstable plant", m.process.unstable(),
        m.process.unstable() ? fmt::format("|a| = {}", std::abs(m.process.a_coeff))
                             : "structural results assume |a| > 1");

    // q(0, h) = 0 and monotone in u and h on a probe grid
    bool monotone = true;
    double worst = 0.0;
    const double u_bar = m.actions.max_level();
    for (std::size_t i = 0; i < m.channel.size(); ++i) {
        const double h = m.channel.gains[i];
        worst = std::max(worst, std::abs(reception_prob(m.reception, 0.0, h)));
        double prev = 0.0;
        for (int k = 0; k <= 200; ++k) {
            const double q = reception_prob(m.reception, u_bar * k / 200.0, h);
            monotone = monotone && q >= prev - 1e-15 && q <= 1.0;
            prev = q;
            if (i > 0) {
                monotone = monotone && q >= reception_prob(m.reception, u_bar * k / 200.0, m.channel.gains[i - 1]) - 1e-15;
            }
        }
    }
    row("reception q(0, h) = 0", worst == 0.0, fmt::format("max q(0, h) = {}", worst));
    row("reception monotone", monotone, "nondecreasing in u and h, within [0, 1]");
    const bool wide = config.grid.half_width > m.actions.saturation_radius;
    row("grid", wide,
        fmt::format("half_width {:.6g}, n_points {}, spacing {:.4g}, L = {}", config.grid.half_width,
                    config.grid.n_points, config.grid.spacing(), m.actions.saturation_radius));
    return all ? ok : validation;
}

/// One row per (node, grid point); history lists the gain indices of the failure run.
void write_node_beliefs(const RunConfig& config, const PowerPolicy& policy, const std::string& path) {
    const auto ctx = context_for(config, policy, 1);
    const auto chain = build_chain(ctx, policy);
    auto out = open_output(path);
    write_csv_preamble(out, config_to_json(config), config.simulate.seed);
    out << "node,depth,history,e,theta\n";
    for (std::size_t n = 0; n < chain.beliefs.size(); ++n) {
        const auto hist = chain.tree.history(n);
        const auto label = fmt::format("{}", fmt::join(hist, "-"));
        const auto& b = chain.beliefs[n];
        for (std::size_t j = 0; j < b.size(); ++j) {
            out << fmt::format("{},{},{},{:.17g},{:.17g}\n", n, hist.size(), label, b.geometry.node(j), b.density[j]);
        }
    }
}

int run_solve(const RunConfig& config, const Globals& g, const std::string& out_path, const std::string& beliefs) {
    auto options = config.solver;
    options.threads = g.threads;
    const auto result = solve(config.model, config.grid, options);
    const GainTree tree(config.model.channel.size(), options.depth);
    Json doc;
    doc["config"] = config_to_json(config);
    doc["seed"] = config.simulate.seed;
    doc["result"] = solve_result_to_json(result);
    doc["policy"] = policy_to_json(result.policy, tree);
    write_json_file(out_path, doc);
    if (!beliefs.empty()) {
        write_node_beliefs(config, result.policy, beliefs);
    }
    fmt::print("rho* = {:.12g} after {} iterations ({}), max_power {:.6g}, best on_off {:.6g} at t = {:.4g}\n",
               result.rho_star, result.iterations, result.converged ? "converged" : "NOT converged",
               result.rho_max_power, result.rho_best_on_off, result.best_on_off_threshold);
    return result.converged ? ok : no_convergence;
}

struct SimulateArgs {
    std::string policy;
    std::string baseline;
    std::optional<std::size_t> horizon;
    std::optional<std::size_t> replications;
    std::string estimator;
    std::string out;
    std::string trace;
    bool resume = false;
};

int run_simulate(RunConfig config, const Globals& g, const SimulateArgs& args) {
    auto& s = config.simulate;
    if (args.horizon) {
        s.horizon = *args.horizon;
    }
    if (args.replications) {
        s.replications = *args.replications;
    }
    if (!args.estimator.empty()) {
        s.estimator = estimator_mode_from_string(args.estimator);
    }
    if (s.horizon == 0 || s.replications == 0) {
        throw ConfigError("-T and -R must be >= 1");
    }
    const auto policy = load_policy(args.policy, args.baseline, config);
    const auto ctx = context_for(config, policy, g.threads);

    SimulationOptions options;
    options.horizon = s.horizon;
    options.seed = s.seed;
    options.estimator = s.estimator;
    options.window = s.window;
    options.track_beliefs = s.track_beliefs;

    Json doc;
    doc["config"] = config_to_json(config);
    doc["seed"] = s.seed;
    doc["policy"] = policy_label(args.policy, args.baseline);

    std::vector<TrajectoryMetrics> done;
    if (args.resume && std::filesystem::exists(args.out)) {
        const auto previous = read_json_file(args.out);
        // the replication count may grow between runs
        const auto comparable = [](Json c) {
            if (c.contains("simulate")) {
                c["simulate"].erase("replications");
            }
            return c;
        };
        if (comparable(previous.value("config", Json())) != comparable(doc["config"]) ||
            previous.value("policy", Json()) != doc["policy"]) {
            throw ConfigError(fmt::format("--resume: '{}' was produced by a different config or policy", args.out));
        }
        for (const auto& run : previous.at("runs")) {
            done.push_back(metrics_from_json(run));
        }
        done.resize(std::min(done.size(), s.replications));
        fmt::print("resuming after {} finished replications\n", done.size());
    }
    if (!args.trace.empty() && done.empty()) {
        auto trace = open_output(args.trace);
        write_csv_preamble(trace, doc["config"], s.seed);
        const Simulator sim(ctx, policy);
        auto first = options;
        first.replication = 0;
        done.push_back(sim.run(first, &trace));
    }

    // checkpoint after every batch so an interrupted run can resume
    const auto batch = std::max<std::size_t>(resolve_threads(g.threads), 1);
    ReplicationSummary summary;
    do {
        const auto target = std::min(s.replications, done.size() + batch);
        summary = replicate(ctx, policy, target, options, g.threads, std::move(done));
        done = summary.runs;
        Json runs = Json::array();
        for (const auto& r : summary.runs) {
            runs.push_back(metrics_to_json(r));
        }
        doc["complete"] = done.size() == s.replications;
        doc["summary"] = summary_to_json(summary);
        doc["runs"] = runs;
        write_json_file(args.out, doc);
    } while (done.size() < s.replications);

    fmt::print("combined {:.6g} +- {:.3g} (J_E {:.6g}, J_W {:.6g}) over {} x {} steps\n", summary.combined.mean,
               summary.combined.standard_error, summary.je.mean, summary.jw.mean, s.replications, s.horizon);
    return ok;
}

int run_evaluate(const RunConfig& config, const Globals& g, const std::string& policy_path,
                 const std::string& baseline, const std::string& out_path) {
    const auto policy = load_policy(policy_path, baseline, config);
    if (policy.is_baseline() && policy.baseline().kind == BaselineKind::zero_power) {
        fmt::print("rho = inf (zero power never transmits)\n");
        return ok;
    }
    const auto ctx = context_for(config, policy, g.threads);
    const auto pe = evaluate(ctx, policy);
    const auto& ev = pe.evaluation;
    fmt::print("rho = {:.12g} (stationary {:.12g}), mean power {:.6g}, mean distortion {:.6g}, tail occupancy {:.3g}, "
               "Poisson residual {:.3g}\n",
               ev.rho, ev.rho_stationary, ev.mean_power, ev.mean_distortion, ev.tail_occupancy, ev.poisson_residual);
    if (!out_path.empty()) {
        Json doc;
        doc["config"] = config_to_json(config);
        doc["seed"] = config.simulate.seed;
        doc["policy"] = policy_label(policy_path, baseline);
        doc["evaluation"] = evaluation_to_json(ev);
        write_json_file(out_path, doc);
    }
    return ok;
}

int run_verify(const RunConfig& config, const Globals& g, const std::string& policy_path, std::size_t trials,
               double tolerance, const std::string& out_path) {
    const auto policy = load_policy(policy_path, "", config);
    if (policy.is_baseline()) {
        throw ConfigError("verify-structure needs a per-state policy");
    }
    const auto ctx = context_for(config, policy, g.threads);
    const auto& tree = ctx.tree;
    std::size_t shape_violations = 0;
    std::string first_violation;
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        if (tree.is_tail(n)) {
            continue;
        }
        for (std::size_t h = 0; h < tree.gain_count(); ++h) {
            const auto a = action_of(policy, n, h, ctx.geometry, ctx.model.actions);
            const auto report = check_symmetric_monotone(a, ctx.geometry);
            if (!report.ok) {
                if (shape_violations++ == 0) {
                    first_violation = fmt::format("node {} gain {}: {}", n, h, report.violation);
                }
            }
        }
    }
    const auto witnesses = structure_witness(ctx, policy, ctx.model.weights);
    double max_gap = -std::numeric_limits<double>::infinity();
    double max_exact_gap = -std::numeric_limits<double>::infinity();
    std::size_t worst = 0;
    for (const auto& w : witnesses) {
        if (w.gap() > max_gap) {
            max_gap = w.gap();
            worst = w.state;
        }
        max_exact_gap = std::max(max_exact_gap, w.exact_gap());
    }
    const bool backup_ok = max_gap <= tolerance;

    WitnessSetup setup;
    setup.process = config.model.process;
    const TransitionKernel kernel(setup.geometry, setup.process);
    std::mt19937_64 rng(config.simulate.seed);
    std::uniform_real_distribution<double> gain(0.3, 3.0);
    std::size_t cost_violations = 0;
    std::size_t relation_violations = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    for (auto form : {ReceptionForm::exponential, ReceptionForm::logistic, ReceptionForm::on_off}) {
        const auto reception = witness_reception(form);
        for (std::size_t i = 0; i < trials; ++i) {
            const auto pair = random_relation_pair(setup, rng);
            const auto a = random_inner_action(setup, pair.inner_radius, rng);
            const double h = gain(rng);
            const auto cost = cost_trial(setup, pair, a, h, reception, config.model.weights);
            min_margin = std::min(min_margin, cost.margin());
            cost_violations += cost.margin() < -1e-6 ? 1 : 0;
            relation_violations += propagation_trial(setup, pair, a, h, reception, kernel).holds() ? 0 : 1;
        }
    }

    fmt::print("symmetric-monotone actions   {:<5} {} states checked{}\n", shape_violations == 0 ? "pass" : "FAIL",
               witnesses.size(), shape_violations == 0 ? "" : ", first violation at " + first_violation);
    fmt::print("monotone vs tabular backup   {:<5} max gap {:.3g} at state {} (tolerance {:.1g}); exact-mean tabular "
               "gap {:.3g}\n",
               backup_ok ? "pass" : "FAIL", max_gap, worst, tolerance, max_exact_gap);
    fmt::print("cost inequality witnesses    {:<5} {} violations in {} trials, min margin {:.3g}\n",
               cost_violations == 0 ? "pass" : "FAIL", cost_violations, 3 * trials, min_margin);
    fmt::print("relation propagation         {:<5} {} violations in {} trials\n",
               relation_violations == 0 ? "pass" : "FAIL", relation_violations, 3 * trials);
    const bool pass = shape_violations == 0 && backup_ok && cost_violations == 0 && relation_violations == 0;
    if (!out_path.empty()) {
        Json doc;
        doc["config"] = config_to_json(config);
        doc["seed"] = config.simulate.seed;
        doc["policy"] = policy_path;
        doc["pass"] = pass;
        doc["shape_violations"] = shape_violations;
        doc["max_backup_gap"] = max_gap;
        doc["max_exact_backup_gap"] = max_exact_gap;
        doc["cost_violations"] = cost_violations;
        doc["relation_violations"] = relation_violations;
        doc["min_cost_margin"] = min_margin;
        write_json_file(out_path, doc);
    }
    return pass ? ok : validation;
}

std::vector<double> parse_range(const std::string& range) {
    std::vector<double> parts;
    std::stringstream in(range);
    std::string item;
    try {
        while (std::getline(in, item, ':')) {
            parts.push_back(std::stod(item));
        }
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("--alpha: expected start:step:stop, got '{}'", range));
    }
    if (parts.size() == 1) {
        return parts;
    }
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0] || parts[0] < 0.0) {
        throw ConfigError(fmt::format("--alpha: expected start:step:stop with step > 0, got '{}'", range));
    }
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
    for (std::size_t i = 0; i <= count; ++i) {
        out.push_back(parts[0] + static_cast<double>(i) * parts[1]);
    }
    return out;
}

int run_sweep(RunConfig config, const Globals& g, const std::string& range, const std::string& out_path) {
    const auto alphas = parse_range(range);
    auto out = open_output(out_path);
    write_csv_preamble(out, config_to_json(config), config.simulate.seed);
    out << "alpha,rho_star,mean_power,mean_distortion,iterations,converged\n";
    auto options = config.solver;
    options.threads = g.threads;
    bool all = true;
    for (double alpha : alphas) {
        config.model.weights.alpha = alpha;
        const auto r = solve(config.model, config.grid, options);
        all = all && r.converged;
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", alpha, r.rho_star, r.evaluation.mean_power,
                           r.evaluation.mean_distortion, r.iterations, r.converged ? 1 : 0);
        out.flush();
        fmt::print("alpha {:<6g} rho* {:.8g}  power {:.6g}  distortion {:.6g}\n", alpha, r.rho_star,
                   r.evaluation.mean_power, r.evaluation.mean_distortion);
    }
    return all ? ok : no_convergence;
}

int run_rearrange_demo(const RunConfig& config, const std::string& out_path) {
    WitnessSetup setup;
    setup.geometry = config.grid;
    setup.process = config.model.process;
    setup.actions = config.model.actions;
    setup.min_inner_radius = std::min(1.0, setup.actions.saturation_radius);
    setup.max_inner_radius = setup.actions.saturation_radius;
    std::mt19937_64 rng(config.simulate.seed);
    const auto pair = random_relation_pair(setup, rng);
    const auto a = random_inner_action(setup, pair.inner_radius, rng);
    const auto sigma = rearranged_action(a, pair.theta, pair.theta_star, setup.actions);
    auto out = open_output(out_path);
    write_csv_preamble(out, config_to_json(config), config.simulate.seed);
    out << "e,a,a_sigma,theta,theta_hat\n";
    for (std::size_t j = 0; j < setup.geometry.n_points; ++j) {
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", setup.geometry.node(j), a.values[j],
                           sigma.values[j], pair.theta.density[j], pair.theta_star.density[j]);
    }
    const auto h = config.model.channel.gains.front();
    fmt::print("inner radius {:.4g}; power {:.9g} -> {:.9g}; success {:.9g} -> {:.9g} at h = {}\n", pair.inner_radius,
               stage_terms(pair.theta, action_profile(a, h, config.model.reception)).power,
               stage_terms(pair.theta_star, action_profile(sigma, h, config.model.reception)).power,
               success_prob(pair.theta, h, a, config.model.reception),
               success_prob(pair.theta_star, h, sigma, config.model.reception), h);
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint transmission-power and remote-estimation solver and simulator"};
    app.require_subcommand(0, 1);
    Globals g;
    bool print_default = false;
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->default_val(1);
    app.add_option("--seed", g.seed, "Override simulate.seed");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")->default_val("warn");
    app.add_flag("--print-default-config", print_default, "Print the default config and exit");

    std::string config_path;
    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    };

    auto* validate = app.add_subcommand("validate", "Check channel, stability, reception and grid");
    add_config(validate);

    std::string out_path;
    auto* solve_cmd = app.add_subcommand("solve", "Solve for the optimal policy");
    add_config(solve_cmd);
    solve_cmd->add_option("-o,--output", out_path, "Result JSON")->required();
    std::string beliefs_path;
    solve_cmd->add_option("--beliefs", beliefs_path, "CSV of every node belief under the solved policy");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation of a policy");
    add_config(simulate);
    simulate->add_option("--policy", sim.policy, "Policy or solve-result JSON");
    simulate->add_option("--baseline", sim.baseline, "max_power, constant:C, on_off:T or zero_power");
    simulate->add_option("-T,--horizon", sim.horizon, "Steps per replication");
    simulate->add_option("-R,--replications", sim.replications, "Replications");
    simulate->add_option("--estimator", sim.estimator, "closed_form or belief_mean");
    simulate->add_option("-o,--output", sim.out, "Metrics JSON")->required();
    simulate->add_option("--trace", sim.trace, "Per-step CSV of replication 0");
    simulate->add_flag("--resume", sim.resume, "Keep finished replications found in the output file");

    std::string policy_path;
    std::string baseline;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Exact average cost of a policy");
    add_config(evaluate_cmd);
    evaluate_cmd->add_option("--policy", policy_path, "Policy or solve-result JSON");
    evaluate_cmd->add_option("--baseline", baseline, "max_power, constant:C or on_off:T");
    evaluate_cmd->add_option("-o,--output", out_path, "Evaluation JSON");

    std::size_t trials = 100;
    double tolerance = 1e-5;
    auto* verify = app.add_subcommand("verify-structure", "Check the structure of a solved policy");
    add_config(verify);
    verify->add_option("--policy", policy_path, "Policy or solve-result JSON")->required();
    verify->add_option("--trials", trials, "Randomized witnesses per reception form")->default_val(100);
    verify->add_option("--tolerance", tolerance, "Allowed tabular advantage in the backup")->default_val(1e-5);
    verify->add_option("-o,--output", out_path, "Report JSON");

    std::string alpha = "0.1:0.1:2.0";
    auto* sweep = app.add_subcommand("sweep", "Solve over a range of power weights");
    add_config(sweep);
    sweep->add_option("--alpha", alpha, "start:step:stop")->default_val("0.1:0.1:2.0");
    sweep->add_option("-o,--output", out_path, "CSV")->required();

    auto* demo = app.add_subcommand("rearrange-demo", "Write one rearrangement trial as CSV");
    add_config(demo);
    demo->add_option("-o,--output", out_path, "CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : io_config;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(g.log_level));
        if (print_default) {
            std::cout << config_to_json(default_config(), true).dump(2) << '\n';
            return ok;
        }
        if (app.get_subcommands().empty()) {
            std::cout << app.help();
            return io_config;
        }
        const auto config = load(config_path, g);
        if (validate->parsed()) {
            return run_validate(config);
        }
        if (solve_cmd->parsed()) {
            return run_solve(config, g, out_path, beliefs_path);
        }
        if (simulate->parsed()) {
            return run_simulate(config, g, sim);
        }
        if (evaluate_cmd->parsed()) {
            return run_evaluate(config, g, policy_path, baseline, out_path);
        }
        if (verify->parsed()) {
            return run_verify(config, g, policy_path, trials, tolerance, out_path);
        }
        if (sweep->parsed()) {
            return run_sweep(config, g, alpha, out_path);
        }
        return run_rearrange_demo(config, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_config;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_config;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_config;
    }
}
