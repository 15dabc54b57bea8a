#pragma once

#include <cstdint>

namespace hedge {

// Counter-based splittable RNG. A stream is identified by the 64-bit words
// mixed into it (seed, step, instrument id, ...). Draws depend only on the
// stream key and the call counter, never on global state, so datasets are
// reproducible regardless of evaluation order or thread count.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed);

    // Independent child stream keyed by `word`. Does not advance this stream.
    SplitRng derive(std::uint64_t word) const;

    std::uint64_t next_u64();
    double uniform();                    // [0, 1)
    double uniform(double lo, double hi);
    int uniform_int(int lo, int hi);     // inclusive bounds
    double normal();                     // standard normal (Box-Muller)

private:
    SplitRng() = default;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace hedge
