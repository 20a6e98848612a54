#pragma once

#include "rse/chain.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rse {

enum class EstimatorMode { closed_form, belief_mean };

[[nodiscard]] std::string to_string(EstimatorMode mode);
[[nodiscard]] EstimatorMode estimator_mode_from_string(const std::string& name);

struct SimulationOptions {
    std::size_t horizon = 1000000;
    std::uint64_t seed = 1;
    std::uint64_t replication = 0;
    EstimatorMode estimator = EstimatorMode::closed_form;
    /// Track the belief-mean estimate alongside the closed form even when it is not the scoring mode.
    bool track_beliefs = false;
    /// Window length for window_mse (0 disables).
    std::size_t window = 0;
};

struct TrajectoryMetrics {
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;
    double empirical_je = 0.0;
    double empirical_jw = 0.0;
    double combined = 0.0;
    double success_rate = 0.0;
    std::vector<double> gain_occupancy;
    std::vector<std::uint64_t> root_attempts;  // per gain
    std::vector<std::uint64_t> root_successes; // per gain
    std::vector<double> window_mse;
    double max_estimator_gap = 0.0; // max |belief-mean estimate - closed-form estimate|
    std::uint64_t belief_fallbacks = 0;
};

/// x_hat_k = x_k on success, otherwise A^(k - tau) x_tau.
[[nodiscard]] double estimate_closed_form(double a_coeff, double last_received, std::size_t steps_since, bool success,
                                          double current_state);

/// Closed-loop Monte Carlo of plant, channel, power controller and estimator for one policy.
/// Trajectories deeper than the chain depth use u_bar.
class Simulator {
public:
    Simulator(const SolverContext& ctx, const PowerPolicy& policy);

    /// One trajectory. When `trace` is set, writes the per-step CSV (header included).
    [[nodiscard]] TrajectoryMetrics run(const SimulationOptions& options, std::ostream* trace = nullptr) const;

    [[nodiscard]] bool beliefs_available() const { return chain_.has_value(); }

private:
    const SolverContext* ctx_;
    PowerPolicy policy_;
    std::optional<UnfoldedChain> chain_;
};

struct MetricSummary {
    double mean = 0.0;
    double standard_error = 0.0;
};

struct ReplicationSummary {
    std::vector<TrajectoryMetrics> runs;
    MetricSummary je, jw, combined, success_rate;
};

[[nodiscard]] MetricSummary summarize(const std::vector<double>& values);
[[nodiscard]] ReplicationSummary summarize(std::vector<TrajectoryMetrics> runs);

/// R independent replications (replication index r uses streams (base_seed, r, .)), run in
/// parallel and aggregated in replication order. `done` may hold already finished runs,
/// which are kept and not recomputed.
[[nodiscard]] ReplicationSummary replicate(const SolverContext& ctx, const PowerPolicy& policy, std::size_t replications,
                                           const SimulationOptions& options, std::size_t threads,
                                           std::vector<TrajectoryMetrics> done = {});

} // namespace rse
