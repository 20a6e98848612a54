#include "rse/belief.hpp"

#include "rse/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace rse {

namespace {

constexpr double kKernelCutoffSigmas = 10.0;
constexpr double kGaussianTailTolerance = 1e-8;
constexpr double kNegligibleShare = 1e-14;

double gaussian_pdf(double x, double var) {
    return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

void require_same_size(const BeliefGrid& theta, const ActionFunction& a) {
    if (theta.size() != a.size()) {
        throw PreconditionError(
            fmt::format("belief has {} nodes but action has {} nodes", theta.size(), a.size()));
    }
}

const CellMix* find_mix(const std::vector<CellMix>& mixes, std::size_t node) {
    auto it = std::lower_bound(mixes.begin(), mixes.end(), node,
                               [](const CellMix& m, std::size_t n) { return m.node < n; });
    if (it != mixes.end() && it->node == node) {
        return &*it;
    }
    return nullptr;
}

} // namespace

double GridGeometry::node(std::size_t j) const {
    return (static_cast<double>(j) - static_cast<double>(center())) * spacing();
}

double GridGeometry::weight(std::size_t j) const {
    const double d = spacing();
    return (j == 0 || j + 1 == n_points) ? 0.5 * d : d;
}

std::size_t GridGeometry::shell_of(std::size_t j) const {
    const auto c = center();
    return j >= c ? j - c : c - j;
}

double GridGeometry::shell_inner(std::size_t k) const {
    return k == 0 ? 0.0 : (static_cast<double>(k) - 0.5) * spacing();
}

double GridGeometry::shell_outer(std::size_t k) const {
    return k == center() ? half_width : (static_cast<double>(k) + 0.5) * spacing();
}

std::size_t GridGeometry::nearest(double e) const {
    const double idx = std::round(e / spacing()) + static_cast<double>(center());
    if (idx <= 0.0) {
        return 0;
    }
    if (idx >= static_cast<double>(n_points - 1)) {
        return n_points - 1;
    }
    return static_cast<std::size_t>(idx);
}

void GridGeometry::validate() const {
    if (n_points < 3 || n_points % 2 == 0) {
        throw ConfigError(fmt::format("grid.n_points must be odd and >= 3 (got {})", n_points));
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
        throw ConfigError("grid.half_width must be > 0");
    }
}

GridGeometry GridGeometry::default_for(const ModelBundle& model, std::size_t n_points) {
    const double w = model.process.w_var;
    const double q_min =
        reception_prob(model.reception, model.actions.max_level(), model.channel.min_gain());
    double e = 30.0 * std::sqrt(w / std::max(1.0 - q_min, 0.01));
    e = std::max(e, model.actions.saturation_radius + 10.0 * std::sqrt(w));
    return GridGeometry{e, n_points};
}

BeliefGrid gaussian_grid(double mean, double var, const GridGeometry& geometry) {
    geometry.validate();
    if (!(var > 0.0)) {
        throw PreconditionError(fmt::format("gaussian_grid: variance must be > 0 (got {})", var));
    }
    const double sigma = std::sqrt(var);
    const double e_max = geometry.half_width;
    const double outside = 0.5 * std::erfc((e_max - mean) / (sigma * std::numbers::sqrt2)) +
                           0.5 * std::erfc((e_max + mean) / (sigma * std::numbers::sqrt2));
    if (outside > kGaussianTailTolerance) {
        throw GeometryError(fmt::format(
            "gaussian_grid: N({}, {}) puts mass {:.3g} outside [-{}, {}]; use half_width >= {:.4g}", mean, var,
            outside, e_max, e_max, std::abs(mean) + 6.0 * sigma));
    }
    std::vector<double> values(geometry.n_points);
    for (std::size_t j = 0; j < values.size(); ++j) {
        values[j] = gaussian_pdf(geometry.node(j) - mean, var);
    }
    return normalized_grid(geometry, std::move(values));
}

BeliefGrid normalized_grid(const GridGeometry& geometry, std::vector<double> values) {
    if (values.size() != geometry.n_points) {
        throw PreconditionError("normalized_grid: value count does not match geometry");
    }
    double mass = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (!(values[j] >= 0.0)) {
            throw PreconditionError(fmt::format("normalized_grid: negative or NaN density at node {}", j));
        }
        mass += geometry.weight(j) * values[j];
    }
    if (!(mass > 0.0)) {
        throw PreconditionError("normalized_grid: zero total mass");
    }
    if (std::abs(mass - 1.0) > 1e-12) {
        spdlog::debug("renormalization drift {:.3e}", mass - 1.0);
    }
    for (auto& v : values) {
        v /= mass;
    }
    return BeliefGrid{geometry, std::move(values)};
}

double total_mass(const BeliefGrid& theta) {
    double m = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        m += theta.geometry.weight(j) * theta.density[j];
    }
    return m;
}

double mean(const BeliefGrid& theta) {
    double m = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        m += theta.geometry.weight(j) * theta.density[j] * theta.geometry.node(j);
    }
    return m;
}

double variance(const BeliefGrid& theta) {
    const double mu = mean(theta);
    double v = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double d = theta.geometry.node(j) - mu;
        v += theta.geometry.weight(j) * theta.density[j] * d * d;
    }
    return v;
}

double tail_mass(const BeliefGrid& theta, double radius) {
    const auto& g = theta.geometry;
    double m = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const auto k = g.shell_of(j);
        const double lo = g.shell_inner(k);
        const double hi = g.shell_outer(k);
        const double frac = std::clamp((hi - std::max(radius, lo)) / (hi - lo), 0.0, 1.0);
        m += frac * g.weight(j) * theta.density[j];
    }
    return m;
}

double asymmetry(const BeliefGrid& theta) {
    const auto c = theta.geometry.center();
    double worst = 0.0;
    for (std::size_t k = 1; k <= c; ++k) {
        worst = std::max(worst, std::abs(theta.density[c + k] - theta.density[c - k]));
    }
    return worst;
}

ActionFunction ActionFunction::constant(const GridGeometry& geometry, double value) {
    return ActionFunction{std::vector<double>(geometry.n_points, value), {}};
}

double ActionFunction::at(const GridGeometry& geometry, double e) const {
    const auto j = geometry.nearest(e);
    const auto* mix = find_mix(mixes, j);
    if (mix == nullptr) {
        return values[j];
    }
    const auto k = geometry.shell_of(j);
    const double lo = geometry.shell_inner(k);
    const double hi = geometry.shell_outer(k);
    const double r = std::abs(e);
    double edge = lo;
    for (const auto& share : mix->shares) {
        edge += share.fraction * (hi - lo);
        if (r < edge) {
            return share.level;
        }
    }
    return mix->shares.back().level;
}

void ActionFunction::validate(const GridGeometry& geometry, const ActionSet& actions) const {
    if (values.size() != geometry.n_points) {
        throw PreconditionError("action: node count does not match geometry");
    }
    const double top = actions.max_level();
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (!actions.contains(values[j])) {
            throw PreconditionError(fmt::format("action: value {} at node {} is not a power level", values[j], j));
        }
        if (std::abs(geometry.node(j)) > actions.saturation_radius && values[j] != top) {
            throw PreconditionError(
                fmt::format("action: node {} (e = {}) lies beyond L = {} but uses power {} < {}", j,
                            geometry.node(j), actions.saturation_radius, values[j], top));
        }
    }
    for (const auto& mix : mixes) {
        double sum = 0.0;
        for (const auto& share : mix.shares) {
            if (!actions.contains(share.level) || share.fraction < 0.0) {
                throw PreconditionError(fmt::format("action: invalid level share in cell {}", mix.node));
            }
            sum += share.fraction;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw PreconditionError(fmt::format("action: level shares of cell {} sum to {}", mix.node, sum));
        }
    }
}

ActionFunction radial_step_action(const GridGeometry& geometry, const std::vector<double>& step_values,
                                  const std::vector<double>& radii) {
    if (step_values.empty() || radii.size() + 1 != step_values.size()) {
        throw PreconditionError("radial_step_action: need one more step value than radii");
    }
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] >= 0.0) || (i > 0 && radii[i] < radii[i - 1])) {
            throw PreconditionError("radial_step_action: radii must be nonnegative and nondecreasing");
        }
    }
    const auto c = geometry.center();
    ActionFunction a;
    a.values.assign(geometry.n_points, step_values.back());
    std::vector<CellMix> positive; // shells k >= 1 on the positive side; mirrored below
    CellMix origin;
    bool origin_mixed = false;

    for (std::size_t k = 0; k <= c; ++k) {
        const double lo = geometry.shell_inner(k);
        const double hi = geometry.shell_outer(k);
        const double r_node = geometry.node(c + k);

        std::size_t step = 0;
        while (step < radii.size() && r_node >= radii[step]) {
            ++step;
        }
        const double node_value = step_values[step];
        a.values[c + k] = node_value;
        a.values[c - k] = node_value;

        std::vector<LevelShare> shares;
        double inner_edge = 0.0;
        for (std::size_t s = 0; s < step_values.size(); ++s) {
            const double outer_edge = s < radii.size() ? radii[s] : hi;
            const double overlap = std::min(hi, outer_edge) - std::max(lo, inner_edge);
            inner_edge = std::max(inner_edge, outer_edge);
            if (overlap <= 0.0) {
                continue;
            }
            const double fraction = overlap / (hi - lo);
            if (fraction < kNegligibleShare) {
                continue;
            }
            if (!shares.empty() && shares.back().level == step_values[s]) {
                shares.back().fraction += fraction;
            } else {
                shares.push_back({step_values[s], fraction});
            }
        }
        if (shares.size() == 1) {
            a.values[c + k] = shares[0].level;
            a.values[c - k] = shares[0].level;
            continue;
        }
        double total = 0.0;
        for (const auto& s : shares) {
            total += s.fraction;
        }
        for (auto& s : shares) {
            s.fraction /= total;
        }
        if (k == 0) {
            origin = CellMix{c, shares};
            origin_mixed = true;
        } else {
            positive.push_back(CellMix{c + k, shares});
        }
    }
    for (auto it = positive.rbegin(); it != positive.rend(); ++it) {
        a.mixes.push_back(CellMix{2 * c - it->node, it->shares});
    }
    if (origin_mixed) {
        a.mixes.push_back(origin);
    }
    for (const auto& m : positive) {
        a.mixes.push_back(m);
    }
    return a;
}

ActionProfile action_profile(const ActionFunction& a, double h, const ReceptionModel& reception) {
    ActionProfile p;
    p.power = a.values;
    p.success.resize(a.size());
    double cached_u = -1.0;
    double cached_q = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a.values[j] != cached_u) {
            cached_u = a.values[j];
            cached_q = reception_prob(reception, cached_u, h);
        }
        p.success[j] = cached_q;
    }
    for (const auto& mix : a.mixes) {
        double power = 0.0;
        double success = 0.0;
        for (const auto& share : mix.shares) {
            power += share.fraction * share.level;
            success += share.fraction * reception_prob(reception, share.level, h);
        }
        p.power[mix.node] = power;
        p.success[mix.node] = success;
    }
    return p;
}

StageTerms stage_terms(const BeliefGrid& theta, const ActionProfile& profile) {
    const auto& g = theta.geometry;
    StageTerms t;
    double fail_mass = 0.0;
    double fail_first = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double m = g.weight(j) * theta.density[j];
        t.success += m * profile.success[j];
        t.power += m * profile.power[j];
        const double f = m * (1.0 - profile.success[j]);
        fail_mass += f;
        fail_first += f * g.node(j);
    }
    if (fail_mass < kDegenerateFailure) {
        t.degenerate = true;
        return t;
    }
    t.post_fail_mean = fail_first / fail_mass;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double d = g.node(j) - t.post_fail_mean;
        t.distortion += g.weight(j) * theta.density[j] * (1.0 - profile.success[j]) * d * d;
    }
    return t;
}

double success_prob(const BeliefGrid& theta, double h, const ActionFunction& a, const ReceptionModel& reception) {
    require_same_size(theta, a);
    return stage_terms(theta, action_profile(a, h, reception)).success;
}

BeliefGrid post_failure(const BeliefGrid& theta, double h, const ActionFunction& a,
                        const ReceptionModel& reception) {
    require_same_size(theta, a);
    const auto profile = action_profile(a, h, reception);
    std::vector<double> values(theta.size());
    double fail_mass = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        values[j] = (1.0 - profile.success[j]) * theta.density[j];
        fail_mass += theta.geometry.weight(j) * values[j];
    }
    if (fail_mass < kDegenerateFailure) {
        throw DegenerateConditioningError(
            fmt::format("post_failure: failure probability {:.3e} is numerically zero", fail_mass));
    }
    return normalized_grid(theta.geometry, std::move(values));
}

double stage_cost(const BeliefGrid& theta, double h, const ActionFunction& a, const ReceptionModel& reception,
                  const CostWeights& weights) {
    require_same_size(theta, a);
    const auto t = stage_terms(theta, action_profile(a, h, reception));
    return weights.alpha * t.power + t.distortion;
}

TransitionKernel::TransitionKernel(const GridGeometry& geometry, const ScalarProcess& process)
    : geometry_(geometry), process_(process) {
    geometry_.validate();
    process_.validate();
    const auto n = geometry_.n_points;
    const double d = geometry_.spacing();
    const double w = process_.w_var;
    const double reach = kKernelCutoffSigmas * std::sqrt(w);
    const double c = static_cast<double>(geometry_.center());
    first_.resize(n);
    offset_.resize(n + 1);
    leak_.resize(n);
    offset_[0] = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double target = process_.a_coeff * geometry_.node(j);
        const double lo_idx = std::max(0.0, std::ceil((target - reach) / d + c));
        const double hi_idx = std::min(static_cast<double>(n - 1), std::floor((target + reach) / d + c));
        double covered = 0.0;
        if (lo_idx <= hi_idx) {
            const auto lo = static_cast<std::size_t>(lo_idx);
            const auto hi = static_cast<std::size_t>(hi_idx);
            first_[j] = lo;
            for (std::size_t i = lo; i <= hi; ++i) {
                const double k = gaussian_pdf(geometry_.node(i) - target, w);
                values_.push_back(k);
                covered += geometry_.weight(i) * k;
            }
        } else {
            first_[j] = 0;
        }
        offset_[j + 1] = values_.size();
        leak_[j] = 1.0 - covered;
    }
}

std::vector<double> TransitionKernel::forward(const std::vector<double>& density, double& escaped) const {
    const auto n = geometry_.n_points;
    std::vector<double> out(n, 0.0);
    escaped = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double m = geometry_.weight(j) * density[j];
        if (m == 0.0) {
            continue;
        }
        escaped += m * leak_[j];
        double* dst = out.data() + first_[j];
        for (std::size_t p = offset_[j]; p < offset_[j + 1]; ++p) {
            *dst++ += m * values_[p];
        }
    }
    escaped = std::max(escaped, 0.0);
    return out;
}

std::vector<double> TransitionKernel::adjoint(const std::vector<double>& g) const {
    const auto n = geometry_.n_points;
    std::vector<double> wg(n);
    for (std::size_t i = 0; i < n; ++i) {
        wg[i] = geometry_.weight(i) * g[i];
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double* src = wg.data() + first_[j];
        double acc = 0.0;
        for (std::size_t p = offset_[j]; p < offset_[j + 1]; ++p) {
            acc += values_[p] * *src++;
        }
        out[j] = acc;
    }
    return out;
}

BeliefGrid propagate(const BeliefGrid& theta, double h, const ActionFunction& a, bool gamma,
                     const TransitionKernel& kernel, const ReceptionModel& reception) {
    if (!(theta.geometry == kernel.geometry())) {
        throw PreconditionError("propagate: belief and kernel use different grids");
    }
    if (gamma) {
        return gaussian_grid(0.0, kernel.process().w_var, kernel.geometry());
    }
    const auto posterior = post_failure(theta, h, a, reception);
    double escaped = 0.0;
    auto next = kernel.forward(posterior.density, escaped);
    if (escaped > kOverflowTolerance) {
        throw SupportOverflowError(fmt::format(
            "propagate: mass {:.3e} escaped [-{:.4g}, {:.4g}]; enlarge grid.half_width", escaped,
            kernel.geometry().half_width, kernel.geometry().half_width));
    }
    return normalized_grid(kernel.geometry(), std::move(next));
}

BeliefGrid propagate(const BeliefGrid& theta, double h, const ActionFunction& a, bool gamma,
                     const ScalarProcess& process, const ReceptionModel& reception) {
    if (gamma) {
        return gaussian_grid(0.0, process.w_var, theta.geometry);
    }
    const TransitionKernel kernel(theta.geometry, process);
    return propagate(theta, h, a, gamma, kernel, reception);
}

void write_belief_csv(std::ostream& out, const BeliefGrid& theta) {
    out << "e,theta\n";
    for (std::size_t j = 0; j < theta.size(); ++j) {
        out << fmt::format("{:.17g},{:.17g}\n", theta.geometry.node(j), theta.density[j]);
    }
}

} // namespace rse
