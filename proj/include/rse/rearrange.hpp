#pragma once

#include "rse/belief.hpp"

#include <vector>

namespace rse {

/// Even, radially nonincreasing density equimeasurable with f on the grid.
/// Node values are sorted in decreasing order and laid out from the origin outward;
/// the two values landing in one shell are averaged so the result is exactly even.
[[nodiscard]] BeliefGrid symmetric_decreasing_rearrangement(const BeliefGrid& f);

/// Mass of the closed ball of shells 0..k for every k (cumulative over shells).
[[nodiscard]] std::vector<double> shell_ball_masses(const BeliefGrid& f);

/// True iff g is majorized by f: every centered ball holds at least as much mass under
/// f's rearrangement as under g's (tolerance 1e-9).
[[nodiscard]] bool majorizes(const BeliefGrid& f, const BeliefGrid& g);

struct RelationReport {
    bool majorized = false;  // theta is majorized by theta_star
    bool symmetric_unimodal = false;
    bool tails_equal = false;
    double tail_gap = 0.0;   // max |theta - theta_star| beyond L

    [[nodiscard]] bool holds() const { return majorized && symmetric_unimodal && tails_equal; }
};

[[nodiscard]] RelationReport relation_report(const BeliefGrid& theta, const BeliefGrid& theta_star, double radius);
[[nodiscard]] bool relation_R(const BeliefGrid& theta, const BeliefGrid& theta_star, double radius);

/// Switching radii of the layer-cake rearrangement of `a`: entry i is the radius r with
/// theta_hat-mass of {|e| >= r} equal to the theta-mass of {a >= levels[i + 1]}.
/// Ties (flat stretches of the outward mass) resolve to the larger radius.
[[nodiscard]] std::vector<double> layer_cake_radii(const ActionFunction& a, const BeliefGrid& theta,
                                                   const BeliefGrid& theta_hat, const std::vector<double>& levels);

/// Measure-matched rearrangement a^sigma of `a` (even, nondecreasing in |e|).
/// Requires equal mass beyond L under theta and theta_hat (within 1e-9).
[[nodiscard]] ActionFunction rearranged_action(const ActionFunction& a, const BeliefGrid& theta,
                                               const BeliefGrid& theta_hat, const ActionSet& actions);

} // namespace rse
