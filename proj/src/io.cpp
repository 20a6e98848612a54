#include "rse/io.hpp"

#include "rse/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

namespace rse {

namespace {

/// Typed access to one JSON object with field paths in every error.
class Section {
public:
    Section(const Json& doc, std::string path, std::set<std::string> known) : path_(std::move(path)) {
        if (doc.is_null()) {
            return;
        }
        if (!doc.is_object()) {
            throw ConfigError(fmt::format("{}: expected an object", path_));
        }
        for (const auto& [key, _] : doc.items()) {
            if (!known.contains(key)) {
                throw ConfigError(fmt::format("{}.{}: unknown field", path_, key));
            }
        }
        doc_ = &doc;
    }

    [[nodiscard]] const Json* find(const std::string& key) const {
        if (doc_ == nullptr) {
            return nullptr;
        }
        const auto it = doc_->find(key);
        return it == doc_->end() ? nullptr : &*it;
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_ + "." + key; }

    void read(const std::string& key, double& out) const {
        if (const auto* v = find(key)) {
            if (!v->is_number()) {
                throw ConfigError(fmt::format("{}: expected a number", field(key)));
            }
            out = v->get<double>();
        }
    }

    void read(const std::string& key, std::size_t& out) const {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || v->get<long long>() < 0) {
                throw ConfigError(fmt::format("{}: expected a nonnegative integer", field(key)));
            }
            out = v->get<std::size_t>();
        }
    }

    void read(const std::string& key, std::uint64_t& out, int) const {
        if (const auto* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
                throw ConfigError(fmt::format("{}: expected a nonnegative integer", field(key)));
            }
            out = v->get<std::uint64_t>();
        }
    }

    void read(const std::string& key, bool& out) const {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(fmt::format("{}: expected true or false", field(key)));
            }
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, std::string& out) const {
        if (const auto* v = find(key)) {
            if (!v->is_string()) {
                throw ConfigError(fmt::format("{}: expected a string", field(key)));
            }
            out = v->get<std::string>();
        }
    }

    void read(const std::string& key, std::vector<double>& out) const {
        if (const auto* v = find(key)) {
            if (!v->is_array()) {
                throw ConfigError(fmt::format("{}: expected an array of numbers", field(key)));
            }
            out.clear();
            for (const auto& x : *v) {
                if (!x.is_number()) {
                    throw ConfigError(fmt::format("{}: expected an array of numbers", field(key)));
                }
                out.push_back(x.get<double>());
            }
        }
    }

private:
    std::string path_;
    const Json* doc_ = nullptr;
};

const Json& member(const Json& doc, const std::string& key) {
    static const Json null;
    const auto it = doc.find(key);
    return it == doc.end() ? null : *it;
}

template <class F>
auto with_field(const std::string& field, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(fmt::format("{}: {}", field, e.what()));
    }
}

} // namespace

Json number_to_json(double x) {
    if (std::isfinite(x)) {
        return x;
    }
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

double number_from_json(const Json& v) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        if (s == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
        throw ConfigError(fmt::format("expected a number, got \"{}\"", s));
    }
    return v.get<double>();
}

RunConfig default_config() {
    RunConfig c;
    c.model = canonical_model();
    c.grid = GridGeometry::default_for(c.model);
    return c;
}

RunConfig parse_config(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto upto = text.substr(0, std::min(e.byte, text.size()));
        const auto line = 1 + std::count(upto.begin(), upto.end(), '\n');
        const auto column = upto.size() - (upto.rfind('\n') == std::string::npos ? 0 : upto.rfind('\n') + 1);
        throw ConfigError(fmt::format("malformed JSON at line {}, column {}: {}", line, column, e.what()));
    }
    if (!doc.is_object()) {
        throw ConfigError("config: expected a JSON object");
    }
    Section(doc, "config", {"process", "channel", "reception", "actions", "cost", "grid", "solver", "simulate"});

    RunConfig c = default_config();
    auto& m = c.model;

    const Section process(member(doc, "process"), "process", {"a_coeff", "w_var", "init_var", "init_mean"});
    process.read("a_coeff", m.process.a_coeff);
    process.read("w_var", m.process.w_var);
    process.read("init_var", m.process.init_var);
    process.read("init_mean", m.process.init_mean);
    with_field("process", [&] { m.process.validate(); });

    const Section channel(member(doc, "channel"), "channel", {"gains", "transition", "initial_gain_index"});
    channel.read("gains", m.channel.gains);
    if (const auto* t = channel.find("transition")) {
        if (!t->is_array()) {
            throw ConfigError("channel.transition: expected a square array of rows");
        }
        const auto n = t->size();
        m.channel.transition.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& row = (*t)[i];
            if (!row.is_array() || row.size() != n) {
                throw ConfigError(fmt::format("channel.transition[{}]: expected {} numbers", i, n));
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (!row[j].is_number()) {
                    throw ConfigError(fmt::format("channel.transition[{}][{}]: expected a number", i, j));
                }
                m.channel.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    row[j].get<double>();
            }
        }
    }
    channel.read("initial_gain_index", m.channel.initial_gain_index);
    with_field("channel", [&] { m.channel.validate(); });

    const Section reception(member(doc, "reception"), "reception",
                            {"form", "scale", "steepness", "midpoint", "success_prob", "snr_min"});
    std::string form = to_string(m.reception.form);
    reception.read("form", form);
    m.reception.form = with_field("reception.form", [&] { return reception_form_from_string(form); });
    reception.read("scale", m.reception.scale);
    reception.read("steepness", m.reception.steepness);
    reception.read("midpoint", m.reception.midpoint);
    reception.read("success_prob", m.reception.success_prob);
    reception.read("snr_min", m.reception.snr_min);
    with_field("reception", [&] { m.reception.validate(); });

    const Section actions(member(doc, "actions"), "actions", {"levels", "saturation_radius", "lipschitz_bound"});
    actions.read("levels", m.actions.levels);
    actions.read("saturation_radius", m.actions.saturation_radius);
    actions.read("lipschitz_bound", m.actions.lipschitz_bound);
    with_field("actions", [&] { m.actions.validate(); });

    const Section cost(member(doc, "cost"), "cost", {"alpha"});
    cost.read("alpha", m.weights.alpha);
    with_field("cost", [&] { m.weights.validate(); });

    const Section grid(member(doc, "grid"), "grid", {"half_width", "n_points"});
    grid.read("n_points", c.grid.n_points);
    c.grid_auto = true;
    if (const auto* hw = grid.find("half_width")) {
        if (hw->is_string() && hw->get<std::string>() == "auto") {
            c.grid_auto = true;
        } else if (hw->is_number()) {
            c.grid.half_width = hw->get<double>();
            c.grid_auto = false;
        } else {
            throw ConfigError("grid.half_width: expected a number or \"auto\"");
        }
    }
    if (c.grid_auto) {
        c.grid = with_field("grid", [&] { return GridGeometry::default_for(m, c.grid.n_points); });
    }
    with_field("grid", [&] { c.grid.validate(); });

    const Section solver(member(doc, "solver"), "solver",
                         {"depth", "threshold_points", "tol_rho", "max_rounds", "polish", "polish_budget", "tabular",
                          "enumeration_limit"});
    auto& o = c.solver;
    solver.read("depth", o.depth);
    solver.read("threshold_points", o.threshold_points);
    solver.read("tol_rho", o.tol_rho);
    solver.read("max_rounds", o.max_rounds);
    std::string polish = to_string(o.polish);
    solver.read("polish", polish);
    o.polish = with_field("solver.polish", [&] { return polish_mode_from_string(polish); });
    solver.read("polish_budget", o.polish_budget);
    solver.read("tabular", o.tabular);
    solver.read("enumeration_limit", o.enumeration_limit);
    with_field("solver", [&] { o.validate(); });

    const Section sim(member(doc, "simulate"), "simulate",
                      {"horizon", "seed", "replications", "estimator", "window", "track_beliefs"});
    auto& s = c.simulate;
    sim.read("horizon", s.horizon);
    sim.read("seed", s.seed, 0);
    sim.read("replications", s.replications);
    std::string estimator = to_string(s.estimator);
    sim.read("estimator", estimator);
    s.estimator = with_field("simulate.estimator", [&] { return estimator_mode_from_string(estimator); });
    sim.read("window", s.window);
    sim.read("track_beliefs", s.track_beliefs);
    if (s.horizon == 0) {
        throw ConfigError("simulate.horizon: must be >= 1");
    }
    if (s.replications == 0) {
        throw ConfigError("simulate.replications: must be >= 1");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_config(buffer.str());
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

Json config_to_json(const RunConfig& c, bool keep_auto) {
    const auto& m = c.model;
    Json transition = Json::array();
    for (Eigen::Index i = 0; i < m.channel.transition.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.channel.transition.cols(); ++j) {
            row.push_back(m.channel.transition(i, j));
        }
        transition.push_back(row);
    }
    Json doc;
    doc["process"] = {{"a_coeff", m.process.a_coeff},
                      {"w_var", m.process.w_var},
                      {"init_var", m.process.init_var},
                      {"init_mean", m.process.init_mean}};
    doc["channel"] = {{"gains", m.channel.gains},
                      {"transition", transition},
                      {"initial_gain_index", m.channel.initial_gain_index}};
    doc["reception"] = {{"form", to_string(m.reception.form)},  {"scale", m.reception.scale},
                        {"steepness", m.reception.steepness},   {"midpoint", m.reception.midpoint},
                        {"success_prob", m.reception.success_prob}, {"snr_min", m.reception.snr_min}};
    doc["actions"] = {{"levels", m.actions.levels},
                      {"saturation_radius", m.actions.saturation_radius},
                      {"lipschitz_bound", m.actions.lipschitz_bound}};
    doc["cost"] = {{"alpha", m.weights.alpha}};
    doc["grid"] = Json::object();
    if (keep_auto && c.grid_auto) {
        doc["grid"]["half_width"] = "auto";
    } else {
        doc["grid"]["half_width"] = c.grid.half_width;
    }
    doc["grid"]["n_points"] = c.grid.n_points;
    const auto& o = c.solver;
    doc["solver"] = {{"depth", o.depth},
                     {"threshold_points", o.threshold_points},
                     {"tol_rho", o.tol_rho},
                     {"max_rounds", o.max_rounds},
                     {"polish", to_string(o.polish)},
                     {"polish_budget", o.polish_budget},
                     {"tabular", o.tabular},
                     {"enumeration_limit", o.enumeration_limit}};
    const auto& s = c.simulate;
    doc["simulate"] = {{"horizon", s.horizon},
                       {"seed", s.seed},
                       {"replications", s.replications},
                       {"estimator", to_string(s.estimator)},
                       {"window", s.window},
                       {"track_beliefs", s.track_beliefs}};
    return doc;
}

namespace {

Json action_to_json(const StateAction& action) {
    if (const auto* t = std::get_if<ThresholdAction>(&action)) {
        return {{"thresholds", t->thresholds}};
    }
    const auto& a = std::get<ActionFunction>(action);
    Json out = {{"table", a.values}};
    if (!a.mixes.empty()) {
        Json mixes = Json::array();
        for (const auto& mix : a.mixes) {
            Json shares = Json::array();
            for (const auto& s : mix.shares) {
                shares.push_back({s.level, s.fraction});
            }
            mixes.push_back({{"node", mix.node}, {"shares", shares}});
        }
        out["mixes"] = mixes;
    }
    return out;
}

StateAction action_from_json(const Json& entry, const std::string& where) {
    if (entry.contains("thresholds")) {
        ThresholdAction t;
        for (const auto& v : entry.at("thresholds")) {
            t.thresholds.push_back(v.get<double>());
        }
        return t;
    }
    if (entry.contains("table")) {
        ActionFunction a;
        a.values = entry.at("table").get<std::vector<double>>();
        if (entry.contains("mixes")) {
            for (const auto& mix : entry.at("mixes")) {
                CellMix cm;
                cm.node = mix.at("node").get<std::size_t>();
                for (const auto& s : mix.at("shares")) {
                    cm.shares.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
                }
                a.mixes.push_back(std::move(cm));
            }
        }
        return a;
    }
    throw ConfigError(fmt::format("{}: expected \"thresholds\" or \"table\"", where));
}

} // namespace

Json policy_to_json(const PowerPolicy& policy, const GainTree& tree) {
    Json doc;
    doc["mode"] = to_string(policy.mode());
    doc["gain_count"] = policy.gain_count();
    if (policy.is_baseline()) {
        doc["baseline"] = {{"kind", to_string(policy.baseline().kind)}, {"value", policy.baseline().value}};
        return doc;
    }
    doc["depth"] = policy.depth();
    Json entries = Json::array();
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
        for (std::size_t h = 0; h < tree.gain_count(); ++h) {
            Json e = {{"node", n}, {"history", tree.history(n)}, {"gain", h}};
            e.update(action_to_json(policy.entry(n, h)));
            entries.push_back(std::move(e));
        }
    }
    doc["entries"] = std::move(entries);
    return doc;
}

PowerPolicy policy_from_json(const Json& input, const ActionSet& actions) {
    const Json& doc = input.contains("policy") ? input.at("policy") : input;
    try {
        const auto gains = doc.at("gain_count").get<std::size_t>();
        if (doc.contains("baseline")) {
            const auto& b = doc.at("baseline");
            const Baseline baseline{baseline_kind_from_string(b.at("kind").get<std::string>()),
                                    b.value("value", 0.0)};
            return PowerPolicy::from_baseline(baseline, gains);
        }
        const GainTree tree(gains, doc.at("depth").get<std::size_t>());
        std::vector<StateAction> entries(tree.state_count());
        std::vector<bool> seen(tree.state_count(), false);
        for (const auto& e : doc.at("entries")) {
            const auto n = e.at("node").get<std::size_t>();
            const auto h = e.at("gain").get<std::size_t>();
            if (n >= tree.node_count() || h >= gains) {
                throw ConfigError(fmt::format("policy entry (node {}, gain {}) is outside the tree", n, h));
            }
            const auto s = tree.state(n, h);
            entries[s] = action_from_json(e, fmt::format("policy entry (node {}, gain {})", n, h));
            if (const auto* t = std::get_if<ThresholdAction>(&entries[s])) {
                t->validate(actions);
            }
            seen[s] = true;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw ConfigError(fmt::format("policy: expected {} entries, some (node, gain) pairs are missing",
                                          tree.state_count()));
        }
        return PowerPolicy::from_entries(std::move(entries), tree);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("policy: {}", e.what()));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(fmt::format("policy: {}", e.what()));
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
    }
}

Json evaluation_to_json(const Evaluation& ev) {
    return {{"rho", ev.rho},
            {"rho_stationary", ev.rho_stationary},
            {"mean_power", ev.mean_power},
            {"mean_distortion", ev.mean_distortion},
            {"tail_occupancy", ev.tail_occupancy},
            {"poisson_residual", ev.poisson_residual}};
}

Json solve_result_to_json(const SolveResult& r) {
    return {{"rho_star", r.rho_star},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"polish_sweeps", r.polish_sweeps},
            {"rho_history", r.rho_history},
            {"rho_max_power", r.rho_max_power},
            {"rho_best_on_off", r.rho_best_on_off},
            {"best_on_off_threshold", r.best_on_off_threshold},
            {"evaluation", evaluation_to_json(r.evaluation)}};
}

Json metrics_to_json(const TrajectoryMetrics& m) {
    std::vector<double> root_rate;
    for (std::size_t h = 0; h < m.root_attempts.size(); ++h) {
        root_rate.push_back(m.root_attempts[h] == 0 ? 0.0
                                                    : static_cast<double>(m.root_successes[h]) /
                                                          static_cast<double>(m.root_attempts[h]));
    }
    Json windows = Json::array();
    for (double w : m.window_mse) {
        windows.push_back(number_to_json(w));
    }
    return {{"replication", m.replication},
            {"seed", m.seed},
            {"horizon", m.horizon},
            {"empirical_je", number_to_json(m.empirical_je)},
            {"empirical_jw", number_to_json(m.empirical_jw)},
            {"combined", number_to_json(m.combined)},
            {"success_rate", m.success_rate},
            {"gain_occupancy", m.gain_occupancy},
            {"root_attempts", m.root_attempts},
            {"root_successes", m.root_successes},
            {"root_success_rate", root_rate},
            {"window_mse", windows},
            {"max_estimator_gap", number_to_json(m.max_estimator_gap)},
            {"belief_fallbacks", m.belief_fallbacks}};
}

TrajectoryMetrics metrics_from_json(const Json& run) {
    TrajectoryMetrics m;
    try {
        m.replication = run.at("replication").get<std::uint64_t>();
        m.seed = run.at("seed").get<std::uint64_t>();
        m.horizon = run.at("horizon").get<std::size_t>();
        m.empirical_je = number_from_json(run.at("empirical_je"));
        m.empirical_jw = number_from_json(run.at("empirical_jw"));
        m.combined = number_from_json(run.at("combined"));
        m.success_rate = run.at("success_rate").get<double>();
        m.gain_occupancy = run.at("gain_occupancy").get<std::vector<double>>();
        m.root_attempts = run.at("root_attempts").get<std::vector<std::uint64_t>>();
        m.root_successes = run.at("root_successes").get<std::vector<std::uint64_t>>();
        for (const auto& w : run.at("window_mse")) {
            m.window_mse.push_back(number_from_json(w));
        }
        m.max_estimator_gap = number_from_json(run.at("max_estimator_gap"));
        m.belief_fallbacks = run.at("belief_fallbacks").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("metrics run: {}", e.what()));
    }
    return m;
}

Json summary_to_json(const ReplicationSummary& s) {
    const auto metric = [](const MetricSummary& x) {
        return Json{{"mean", number_to_json(x.mean)}, {"standard_error", number_to_json(x.standard_error)}};
    };
    return {{"replications", s.runs.size()},
            {"empirical_je", metric(s.je)},
            {"empirical_jw", metric(s.jw)},
            {"combined", metric(s.combined)},
            {"success_rate", metric(s.success_rate)}};
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw IoError(fmt::format("write to '{}' failed", path.string()));
    }
}

void write_csv_preamble(std::ostream& out, const Json& config, std::uint64_t seed) {
    out << "# config: " << config.dump() << '\n' << "# seed: " << seed << '\n';
}

} // namespace rse
