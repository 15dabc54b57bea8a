#include "hedge/rng.hpp"

#include <cmath>

namespace hedge {

namespace {

// SplitMix64 finalizer; full-period 64-bit mix.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

SplitRng::SplitRng(std::uint64_t seed) : key_(mix64(mix64(seed) ^ 0xa0761d6478bd642fULL)) {}

SplitRng SplitRng::derive(std::uint64_t word) const {
    SplitRng child;
    child.key_ = mix64(key_ ^ mix64(word ^ 0xe7037ed1a0b428dbULL));
    return child;
}

std::uint64_t SplitRng::next_u64() {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double SplitRng::uniform() {
    // 53 random bits into [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SplitRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int SplitRng::uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

double SplitRng::normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0)
        u1 = 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

} // namespace hedge
