#include "rse/rearrange.hpp"

#include "rse/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>

namespace rse {

namespace {

constexpr double kMajorizationTolerance = 1e-9;
constexpr double kUnimodalWiggle = 1e-10;
constexpr double kTailTolerance = 1e-9;

void require_same_geometry(const BeliefGrid& a, const BeliefGrid& b, const char* what) {
    if (!(a.geometry == b.geometry)) {
        throw PreconditionError(fmt::format("{}: grids use different geometries", what));
    }
}

// Mass of every shell under theta (both cells of the shell).
std::vector<double> shell_masses(const BeliefGrid& theta) {
    const auto& g = theta.geometry;
    const auto c = g.center();
    std::vector<double> m(g.shell_count());
    m[0] = g.weight(c) * theta.density[c];
    for (std::size_t k = 1; k <= c; ++k) {
        m[k] = g.weight(c + k) * theta.density[c + k] + g.weight(c - k) * theta.density[c - k];
    }
    return m;
}

// Mass of each shell carried by levels >= threshold_level under action a.
std::vector<double> superlevel_shell_masses(const ActionFunction& a, const BeliefGrid& theta, double level) {
    const auto& g = theta.geometry;
    std::vector<double> cell(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
        cell[j] = a.values[j] >= level ? 1.0 : 0.0;
    }
    for (const auto& mix : a.mixes) {
        double f = 0.0;
        for (const auto& s : mix.shares) {
            if (s.level >= level) {
                f += s.fraction;
            }
        }
        cell[mix.node] = f;
    }
    std::vector<double> m(g.shell_count(), 0.0);
    for (std::size_t j = 0; j < theta.size(); ++j) {
        m[g.shell_of(j)] += cell[j] * g.weight(j) * theta.density[j];
    }
    return m;
}

} // namespace

BeliefGrid symmetric_decreasing_rearrangement(const BeliefGrid& f) {
    const auto& g = f.geometry;
    const auto c = g.center();
    std::vector<double> sorted = f.density;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::vector<double> out(f.size());
    out[c] = sorted[0];
    for (std::size_t k = 1; k <= c; ++k) {
        const double v = 0.5 * (sorted[2 * k - 1] + sorted[2 * k]);
        out[c + k] = v;
        out[c - k] = v;
    }
    return normalized_grid(g, std::move(out));
}

std::vector<double> shell_ball_masses(const BeliefGrid& f) {
    auto m = shell_masses(f);
    for (std::size_t k = 1; k < m.size(); ++k) {
        m[k] += m[k - 1];
    }
    return m;
}

bool majorizes(const BeliefGrid& f, const BeliefGrid& g) {
    require_same_geometry(f, g, "majorizes");
    const auto bf = shell_ball_masses(symmetric_decreasing_rearrangement(f));
    const auto bg = shell_ball_masses(symmetric_decreasing_rearrangement(g));
    for (std::size_t k = 0; k < bf.size(); ++k) {
        if (bf[k] < bg[k] - kMajorizationTolerance) {
            return false;
        }
    }
    return true;
}

RelationReport relation_report(const BeliefGrid& theta, const BeliefGrid& theta_star, double radius) {
    require_same_geometry(theta, theta_star, "relation_R");
    const auto& g = theta.geometry;
    const auto c = g.center();
    RelationReport r;
    r.majorized = majorizes(theta_star, theta);

    r.symmetric_unimodal = asymmetry(theta_star) <= kUnimodalWiggle;
    for (std::size_t k = 1; k <= c && r.symmetric_unimodal; ++k) {
        if (theta_star.density[c + k] > theta_star.density[c + k - 1] + kUnimodalWiggle ||
            theta_star.density[c - k] > theta_star.density[c - k + 1] + kUnimodalWiggle) {
            r.symmetric_unimodal = false;
        }
    }

    for (std::size_t j = 0; j < theta.size(); ++j) {
        if (std::abs(g.node(j)) > radius) {
            r.tail_gap = std::max(r.tail_gap, std::abs(theta.density[j] - theta_star.density[j]));
        }
    }
    r.tails_equal = r.tail_gap <= kTailTolerance;
    return r;
}

bool relation_R(const BeliefGrid& theta, const BeliefGrid& theta_star, double radius) {
    return relation_report(theta, theta_star, radius).holds();
}

std::vector<double> layer_cake_radii(const ActionFunction& a, const BeliefGrid& theta, const BeliefGrid& theta_hat,
                                     const std::vector<double>& levels) {
    require_same_geometry(theta, theta_hat, "rearranged_action");
    if (a.size() != theta.size()) {
        throw PreconditionError("rearranged_action: action and belief sizes differ");
    }
    const auto& g = theta.geometry;
    const auto target = shell_masses(theta_hat);
    const auto shells = target.size();

    // outward[k] = theta_hat mass of shells k..K
    std::vector<double> outward(shells + 1, 0.0);
    for (std::size_t k = shells; k-- > 0;) {
        outward[k] = outward[k + 1] + target[k];
    }

    std::vector<double> radii;
    radii.reserve(levels.size() - 1);
    for (std::size_t i = 1; i < levels.size(); ++i) {
        const auto sup = superlevel_shell_masses(a, theta, levels[i]);
        double mu = 0.0;
        for (std::size_t k = shells; k-- > 0;) {
            mu += sup[k];
        }

        double r = 0.0;
        if (mu <= 0.0) {
            r = g.half_width;
        } else if (mu >= outward[0]) {
            r = 0.0;
        } else {
            // outermost shell k whose outward mass reaches mu, i.e. outward[k] >= mu > outward[k+1]
            std::size_t k = shells - 1;
            while (k > 0 && outward[k] < mu) {
                --k;
            }
            const double inside = mu - outward[k + 1];
            const double frac = target[k] > 0.0 ? std::clamp(inside / target[k], 0.0, 1.0) : 1.0;
            r = g.shell_outer(k) - frac * (g.shell_outer(k) - g.shell_inner(k));
        }
        if (!radii.empty()) {
            r = std::max(r, radii.back());
        }
        radii.push_back(r);
    }
    return radii;
}

ActionFunction rearranged_action(const ActionFunction& a, const BeliefGrid& theta, const BeliefGrid& theta_hat,
                                 const ActionSet& actions) {
    const double L = actions.saturation_radius;
    const double tail = tail_mass(theta, L);
    const double tail_hat = tail_mass(theta_hat, L);
    if (std::abs(tail - tail_hat) > kTailTolerance) {
        throw PreconditionError(
            fmt::format("rearranged_action: mass beyond L differs ({:.3e} vs {:.3e})", tail, tail_hat));
    }
    auto radii = layer_cake_radii(a, theta, theta_hat, actions.levels);
    for (auto& r : radii) {
        if (r > L) {
            // only a flat stretch of theta_hat can push the match past L
            if (tail_mass(theta_hat, r) < tail_hat - kTailTolerance) {
                throw PreconditionError(fmt::format("rearranged_action: matched radius {} exceeds L = {}", r, L));
            }
            r = L;
        }
    }
    return radial_step_action(theta.geometry, actions.levels, radii);
}

} // namespace rse
