#include "rse/rng.hpp"

namespace rse {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t replication, Stream stream)
    : key_(mix64(mix64(mix64(seed + kGolden) ^ (replication * kGolden + 1)) ^ static_cast<std::uint64_t>(stream))) {}

CounterRng::result_type CounterRng::operator()() { return mix64(key_ + kGolden * ++counter_); }

double uniform01(CounterRng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace rse
