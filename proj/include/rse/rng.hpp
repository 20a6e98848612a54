#pragma once

#include <cstdint>
#include <limits>

namespace rse {

/// Independent random streams of one simulation run.
enum class Stream : std::uint64_t { noise = 1, channel = 2, reception = 3, initial = 4 };

/// Counter-based generator: output i of stream (seed, replication, stream) is a fixed
/// function of those four numbers, so runs reproduce exactly and replications never share
/// draws. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t replication, Stream stream);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();
    [[nodiscard]] std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// SplitMix64 finaliser.
[[nodiscard]] std::uint64_t mix64(std::uint64_t z);

/// Uniform double in [0, 1) with 53 random bits.
[[nodiscard]] double uniform01(CounterRng& rng);

} // namespace rse
