#pragma once

#include "rse/simulator.hpp"
#include "rse/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace rse {

using Json = nlohmann::ordered_json;

struct SimulateSettings {
    std::size_t horizon = 1000000;
    std::uint64_t seed = 1;
    std::size_t replications = 20;
    EstimatorMode estimator = EstimatorMode::closed_form;
    std::size_t window = 100000;
    bool track_beliefs = true;
};

/// One experiment: sections process, channel, reception, actions, cost, grid, solver, simulate.
struct RunConfig {
    ModelBundle model;
    GridGeometry grid;
    bool grid_auto = true; // half_width derived from the model
    SolverOptions solver;
    SimulateSettings simulate;
};

/// Canonical model with every default spelled out.
[[nodiscard]] RunConfig default_config();

/// Missing keys keep their defaults; unknown keys, wrong types and invalid values throw
/// ConfigError naming the field (and the line for malformed JSON).
[[nodiscard]] RunConfig parse_config(const std::string& text);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// Resolved config (grid half_width as a number unless `keep_auto`).
[[nodiscard]] Json config_to_json(const RunConfig& config, bool keep_auto = false);

[[nodiscard]] Json policy_to_json(const PowerPolicy& policy, const GainTree& tree);
/// Accepts a bare policy document or any output document with a "policy" member.
[[nodiscard]] PowerPolicy policy_from_json(const Json& doc, const ActionSet& actions);
[[nodiscard]] Json read_json_file(const std::filesystem::path& path);

/// Non-finite values become the strings "inf", "-inf" and "nan".
[[nodiscard]] Json number_to_json(double x);
[[nodiscard]] double number_from_json(const Json& v);

[[nodiscard]] Json evaluation_to_json(const Evaluation& evaluation);
[[nodiscard]] Json solve_result_to_json(const SolveResult& result);
[[nodiscard]] Json metrics_to_json(const TrajectoryMetrics& metrics);
[[nodiscard]] TrajectoryMetrics metrics_from_json(const Json& run);
[[nodiscard]] Json summary_to_json(const ReplicationSummary& summary);

/// Writes `doc` with two-space indentation and a trailing newline; throws IoError on failure.
void write_json_file(const std::filesystem::path& path, const Json& doc);

/// "# config: {...}" and "# seed: S" comment lines that start every CSV output.
void write_csv_preamble(std::ostream& out, const Json& config, std::uint64_t seed);

} // namespace rse
