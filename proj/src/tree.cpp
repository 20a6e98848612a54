#include "rse/tree.hpp"

#include "rse/error.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace rse {

GainTree::GainTree(std::size_t gain_count, std::size_t depth) : gains_(gain_count), depth_(depth) {
    if (gain_count == 0) {
        throw PreconditionError("gain tree needs at least one gain");
    }
    if (depth == 0) {
        throw PreconditionError("gain tree depth must be >= 1");
    }
    level_start_.push_back(0);
    std::size_t width = 1;
    for (std::size_t d = 0; d <= depth; ++d) {
        level_start_.push_back(level_start_.back() + width);
        width *= gain_count;
    }
    node_count_ = level_start_.back();
}

std::size_t GainTree::depth_of(std::size_t node) const {
    if (node >= node_count_) {
        throw DomainError(fmt::format("node {} outside tree of {} nodes", node, node_count_));
    }
    const auto it = std::upper_bound(level_start_.begin(), level_start_.end(), node);
    return static_cast<std::size_t>(it - level_start_.begin()) - 1;
}

std::size_t GainTree::child(std::size_t node, std::size_t gain) const {
    if (is_tail(node)) {
        return node;
    }
    return gains_ * node + 1 + gain;
}

std::size_t GainTree::parent(std::size_t node) const {
    if (node == 0) {
        throw DomainError("root has no parent");
    }
    return (node - 1) / gains_;
}

std::size_t GainTree::last_gain(std::size_t node) const {
    if (node == 0) {
        throw DomainError("root has no incoming failure");
    }
    return (node - 1) % gains_;
}

std::vector<std::size_t> GainTree::history(std::size_t node) const {
    (void)depth_of(node);
    std::vector<std::size_t> h;
    while (node != 0) {
        h.push_back(last_gain(node));
        node = parent(node);
    }
    std::reverse(h.begin(), h.end());
    return h;
}

} // namespace rse
