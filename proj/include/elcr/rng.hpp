#pragma once

// Counter-based random streams. A stream is a mixed 64-bit key plus a call
// counter; output i is finalize(key + i * golden). Streams keyed by
// (seed, stream id) are independent for practical purposes, so replications
// can run on any number of threads and still produce identical draws.

#include <cstdint>

namespace elcr {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

} // namespace detail

class CounterRng {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(detail::mix64(detail::mix64(seed + kGolden) ^
                             detail::mix64(stream + 0xD1B54A32D192ED03ULL))) {}

    std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * kGolden); }

    // Uniform draw strictly inside (0,1); safe under log/pow transforms.
    double next_uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Derive an independent child stream; does not disturb this stream.
    CounterRng substream(std::uint64_t id) const { return CounterRng(key_, id); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace elcr
