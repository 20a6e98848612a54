#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace rse {

/// Scalar plant x_{k+1} = a x_k + w_k, w_k ~ N(0, w_var), x_0 ~ N(init_mean, init_var).
struct ScalarProcess {
    double a_coeff = 1.2;
    double w_var = 1.0;
    double init_var = 0.0;
    double init_mean = 0.0;

    /// |a| > 1. The structural results assume this; stable plants are accepted.
    [[nodiscard]] bool unstable() const;
    /// Throws ConfigError when w_var <= 0, init_var < 0 or a value is not finite.
    void validate() const;
};

/// Finite-state Markov fading channel over strictly increasing power gains.
struct FadingChannel {
    std::vector<double> gains;
    Eigen::MatrixXd transition; ///< row-stochastic, transition(i, j) = P(h' = gains[j] | h = gains[i])
    std::size_t initial_gain_index = 0;

    [[nodiscard]] std::size_t size() const { return gains.size(); }
    [[nodiscard]] double min_gain() const;
    /// Structural checks only (shape, stochasticity, ordering); see validate_channel for ergodicity.
    void validate() const;
};

enum class ReceptionForm { exponential, logistic, on_off };

[[nodiscard]] std::string to_string(ReceptionForm form);
[[nodiscard]] ReceptionForm reception_form_from_string(const std::string& name);

/// Success-probability surface q(u, h). Every form satisfies q(0, h) = 0 and is
/// nondecreasing in both arguments.
///
///   exponential: q = 1 - exp(-u h / scale)
///   logistic:    q = (s(k (u h / scale - m)) - s(-k m)) / (1 - s(-k m)),  s the logistic function
///   on_off:      q = success_prob if u h / scale >= snr_min, else 0
struct ReceptionModel {
    ReceptionForm form = ReceptionForm::exponential;
    double scale = 1.0;
    double steepness = 4.0;    // logistic k
    double midpoint = 1.0;     // logistic m
    double success_prob = 1.0; // on_off
    double snr_min = 1e-9;     // on_off

    void validate() const;
};

/// Finite power levels, saturation radius L and the (documentary) Lipschitz bound M.
struct ActionSet {
    std::vector<double> levels{0.0, 1.0, 2.0, 4.0};
    double saturation_radius = 6.0;
    double lipschitz_bound = 1.0;

    [[nodiscard]] double max_level() const { return levels.back(); }
    [[nodiscard]] std::size_t size() const { return levels.size(); }
    /// Index of `value` in levels, or throws DomainError.
    [[nodiscard]] std::size_t index_of(double value) const;
    [[nodiscard]] bool contains(double value) const;
    void validate() const;
};

struct CostWeights {
    double alpha = 0.5;
    void validate() const;
};

/// Everything that defines one estimation/power-control problem instance.
struct ModelBundle {
    ScalarProcess process;
    FadingChannel channel;
    ReceptionModel reception;
    ActionSet actions;
    CostWeights weights;

    void validate() const;
};

struct Diagnostic {
    bool ok = false;
    std::string message;
};

/// q(u, h). Throws PreconditionError for u < 0 or h <= 0.
[[nodiscard]] double reception_prob(const ReceptionModel& reception, double u, double h);

/// Stability check q(u_bar, h_min) > 1 - 1/a^2.
struct StabilityReport {
    bool ok = false;
    double max_success = 0.0; ///< q(u_bar, h_min)
    double bound = 0.0;       ///< 1 - 1/a^2
    [[nodiscard]] double margin() const { return max_success - bound; }
    [[nodiscard]] std::string message() const;
};

[[nodiscard]] StabilityReport validate_stability(const ScalarProcess& process, const FadingChannel& channel,
                                                 const ReceptionModel& reception, const ActionSet& actions);

/// Irreducibility and aperiodicity of the gain chain.
[[nodiscard]] Diagnostic validate_channel(const FadingChannel& channel);

/// Long-run gain occupancy. Throws PreconditionError when validate_channel fails.
[[nodiscard]] Eigen::VectorXd stationary_distribution(const FadingChannel& channel);

/// The reference instance used throughout the tests and docs.
[[nodiscard]] ModelBundle canonical_model();

} // namespace rse
