#include "rse/model.hpp"

#include "rse/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace rse {

namespace {

constexpr double kRowSumTolerance = 1e-12;

bool finite(double v) { return std::isfinite(v); }

std::vector<std::vector<std::size_t>> adjacency(const Eigen::MatrixXd& p, bool reverse) {
    const auto n = static_cast<std::size_t>(p.rows());
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) {
                if (reverse) {
                    adj[j].push_back(i);
                } else {
                    adj[i].push_back(j);
                }
            }
        }
    }
    return adj;
}

std::vector<long> bfs_levels(const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<long> level(adj.size(), -1);
    std::queue<std::size_t> todo;
    level[0] = 0;
    todo.push(0);
    while (!todo.empty()) {
        const auto v = todo.front();
        todo.pop();
        for (auto w : adj[v]) {
            if (level[w] < 0) {
                level[w] = level[v] + 1;
                todo.push(w);
            }
        }
    }
    return level;
}

} // namespace

bool ScalarProcess::unstable() const { return std::abs(a_coeff) > 1.0; }

void ScalarProcess::validate() const {
    if (!finite(a_coeff) || !finite(w_var) || !finite(init_var) || !finite(init_mean)) {
        throw ConfigError("process: parameters must be finite");
    }
    if (w_var <= 0.0) {
        throw ConfigError(fmt::format("process.w_var must be > 0 (got {})", w_var));
    }
    if (init_var < 0.0) {
        throw ConfigError(fmt::format("process.init_var must be >= 0 (got {})", init_var));
    }
    if (init_mean != 0.0) {
        throw ConfigError("process.init_mean must be 0 (zero-mean normalization)");
    }
}

double FadingChannel::min_gain() const { return *std::min_element(gains.begin(), gains.end()); }

void FadingChannel::validate() const {
    const auto n = gains.size();
    if (n == 0) {
        throw ConfigError("channel.gains must not be empty");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(gains[i] > 0.0) || !finite(gains[i])) {
            throw ConfigError(fmt::format("channel.gains[{}] must be a finite value > 0", i));
        }
        if (i > 0 && !(gains[i] > gains[i - 1])) {
            throw ConfigError("channel.gains must be strictly increasing");
        }
    }
    if (transition.rows() != static_cast<Eigen::Index>(n) || transition.cols() != static_cast<Eigen::Index>(n)) {
        throw ConfigError(fmt::format("channel.transition must be {}x{}", n, n));
    }
    for (Eigen::Index i = 0; i < transition.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < transition.cols(); ++j) {
            const double p = transition(i, j);
            if (!(p >= 0.0 && p <= 1.0)) {
                throw ConfigError(fmt::format("channel.transition[{}][{}] = {} outside [0,1]", i, j, p));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw ConfigError(fmt::format("channel.transition row {} sums to {:.17g}", i, sum));
        }
    }
    if (initial_gain_index >= n) {
        throw ConfigError("channel.initial_gain_index out of range");
    }
}

std::string to_string(ReceptionForm form) {
    switch (form) {
    case ReceptionForm::exponential:
        return "exponential";
    case ReceptionForm::logistic:
        return "logistic";
    case ReceptionForm::on_off:
        return "on_off";
    }
    throw ConfigError("unknown reception form");
}

ReceptionForm reception_form_from_string(const std::string& name) {
    if (name == "exponential") {
        return ReceptionForm::exponential;
    }
    if (name == "logistic") {
        return ReceptionForm::logistic;
    }
    if (name == "on_off") {
        return ReceptionForm::on_off;
    }
    throw ConfigError(fmt::format("reception.form: unknown form '{}' (expected exponential, logistic or on_off)", name));
}

void ReceptionModel::validate() const {
    if (!(scale > 0.0) || !finite(scale)) {
        throw ConfigError("reception.scale must be > 0");
    }
    switch (form) {
    case ReceptionForm::exponential:
        break;
    case ReceptionForm::logistic:
        if (!(steepness > 0.0) || !(midpoint > 0.0)) {
            throw ConfigError("reception: logistic form needs steepness > 0 and midpoint > 0");
        }
        break;
    case ReceptionForm::on_off:
        if (!(success_prob > 0.0 && success_prob <= 1.0) || !(snr_min > 0.0)) {
            throw ConfigError("reception: on_off form needs success_prob in (0,1] and snr_min > 0");
        }
        break;
    }
}

std::size_t ActionSet::index_of(double value) const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == value) {
            return i;
        }
    }
    throw DomainError(fmt::format("power {} is not an admissible level", value));
}

bool ActionSet::contains(double value) const {
    return std::find(levels.begin(), levels.end(), value) != levels.end();
}

void ActionSet::validate() const {
    if (levels.size() < 2) {
        throw ConfigError("actions.levels needs at least two entries");
    }
    if (levels.front() != 0.0) {
        throw ConfigError("actions.levels must start with 0");
    }
    for (std::size_t i = 1; i < levels.size(); ++i) {
        if (!(levels[i] > levels[i - 1]) || !finite(levels[i])) {
            throw ConfigError("actions.levels must be finite and strictly increasing");
        }
    }
    if (!(saturation_radius > 0.0) || !finite(saturation_radius)) {
        throw ConfigError("actions.saturation_radius must be > 0");
    }
    if (!(lipschitz_bound > 0.0)) {
        throw ConfigError("actions.lipschitz_bound must be > 0");
    }
}

void CostWeights::validate() const {
    if (!(alpha >= 0.0) || !finite(alpha)) {
        throw ConfigError("cost.alpha must be finite and >= 0");
    }
}

void ModelBundle::validate() const {
    process.validate();
    channel.validate();
    reception.validate();
    actions.validate();
    weights.validate();
}

double reception_prob(const ReceptionModel& reception, double u, double h) {
    if (!(u >= 0.0)) {
        throw PreconditionError(fmt::format("reception_prob: power must be >= 0 (got {})", u));
    }
    if (!(h > 0.0)) {
        throw PreconditionError(fmt::format("reception_prob: gain must be > 0 (got {})", h));
    }
    const double snr = u * h / reception.scale;
    switch (reception.form) {
    case ReceptionForm::exponential:
        return -std::expm1(-snr);
    case ReceptionForm::logistic: {
        const auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
        const double k = reception.steepness;
        const double m = reception.midpoint;
        const double base = sigmoid(-k * m);
        const double q = (sigmoid(k * (snr - m)) - base) / (1.0 - base);
        return std::clamp(q, 0.0, 1.0);
    }
    case ReceptionForm::on_off:
        return snr >= reception.snr_min ? reception.success_prob : 0.0;
    }
    throw ConfigError("unknown reception form");
}

std::string StabilityReport::message() const {
    return fmt::format("q(u_bar, h_min) = {:.6g} {} 1 - 1/a^2 = {:.6g} (margin {:+.6g})", max_success,
                       ok ? ">" : "<=", bound, margin());
}

StabilityReport validate_stability(const ScalarProcess& process, const FadingChannel& channel,
                                   const ReceptionModel& reception, const ActionSet& actions) {
    StabilityReport report;
    report.max_success = reception_prob(reception, actions.max_level(), channel.min_gain());
    report.bound = 1.0 - 1.0 / (process.a_coeff * process.a_coeff);
    report.ok = report.max_success > report.bound;
    return report;
}

Diagnostic validate_channel(const FadingChannel& channel) {
    const auto& p = channel.transition;
    const auto n = static_cast<std::size_t>(p.rows());
    if (n == 0 || p.cols() != p.rows()) {
        return {false, "transition matrix is empty or not square"};
    }
    const auto forward = bfs_levels(adjacency(p, false));
    const auto backward = bfs_levels(adjacency(p, true));
    for (std::size_t i = 0; i < n; ++i) {
        if (forward[i] < 0 || backward[i] < 0) {
            return {false, fmt::format("reducible: gain state {} is not mutually reachable with state 0", i)};
        }
    }
    // Period = gcd over edges (u -> v) of level(u) + 1 - level(v).
    long period = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) {
                period = std::gcd(period, std::abs(forward[i] + 1 - forward[j]));
            }
        }
    }
    if (period != 1) {
        return {false, fmt::format("periodic: period {}", period)};
    }
    return {true, "irreducible and aperiodic"};
}

Eigen::VectorXd stationary_distribution(const FadingChannel& channel) {
    const auto diag = validate_channel(channel);
    if (!diag.ok) {
        throw PreconditionError("stationary_distribution: " + diag.message);
    }
    const auto n = channel.transition.rows();
    Eigen::MatrixXd system = channel.transition.transpose() - Eigen::MatrixXd::Identity(n, n);
    system.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd pi = system.fullPivLu().solve(rhs);
    for (Eigen::Index i = 0; i < n; ++i) {
        pi(i) = std::max(pi(i), 0.0);
    }
    return pi / pi.sum();
}

ModelBundle canonical_model() {
    ModelBundle model;
    model.process = ScalarProcess{1.2, 1.0, 0.0, 0.0};
    model.channel.gains = {0.5, 2.0};
    model.channel.transition.resize(2, 2);
    model.channel.transition << 0.8, 0.2, 0.3, 0.7;
    model.channel.initial_gain_index = 0;
    model.reception = ReceptionModel{};
    model.actions = ActionSet{};
    model.weights = CostWeights{0.5};
    return model;
}

} // namespace rse
