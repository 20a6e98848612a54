#pragma once

#include <cstddef>
#include <vector>

namespace rse {

/// Failure-run tree over channel-gain histories. Node 0 is the root (no failure since the
/// last success); the child of node n after a failure at gain index h is g n + 1 + h.
/// Nodes at depth N are tail nodes: their failures loop back to themselves.
class GainTree {
public:
    GainTree(std::size_t gain_count, std::size_t depth);

    [[nodiscard]] std::size_t gain_count() const { return gains_; }
    [[nodiscard]] std::size_t depth() const { return depth_; }
    [[nodiscard]] std::size_t node_count() const { return node_count_; }
    [[nodiscard]] std::size_t state_count() const { return node_count_ * gains_; }
    [[nodiscard]] std::size_t state(std::size_t node, std::size_t gain) const { return node * gains_ + gain; }

    [[nodiscard]] std::size_t depth_of(std::size_t node) const;
    [[nodiscard]] bool is_tail(std::size_t node) const { return depth_of(node) == depth_; }
    /// Successor node after a failure at gain h (tail nodes map to themselves).
    [[nodiscard]] std::size_t child(std::size_t node, std::size_t gain) const;
    [[nodiscard]] std::size_t parent(std::size_t node) const;
    /// Gain index at which the failure leading into `node` happened.
    [[nodiscard]] std::size_t last_gain(std::size_t node) const;
    /// Gain indices of the failures since the last success, oldest first.
    [[nodiscard]] std::vector<std::size_t> history(std::size_t node) const;
    /// First node of each depth (size depth + 2; the last entry is node_count).
    [[nodiscard]] const std::vector<std::size_t>& level_starts() const { return level_start_; }

private:
    std::size_t gains_;
    std::size_t depth_;
    std::size_t node_count_;
    std::vector<std::size_t> level_start_;
};

} // namespace rse
