#pragma once

#include <cstdint>

namespace homlab {

/// Counter-based generator: the n-th draw is a pure function of (key, n).
///
/// The output function is the SplitMix64 finalizer applied to
/// key + n * golden_gamma. Independent streams are obtained with split(),
/// which hashes the stream id into a fresh key, so realization r of a run
/// always sees the same numbers regardless of scheduling.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed) noexcept : key_(mix(seed ^ kSeedSalt)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return mix(key_ + (++counter_) * kGamma); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Child stream for `stream`; does not advance this generator.
    CounterRng split(std::uint64_t stream) const noexcept {
        CounterRng child(0);
        child.key_ = mix(key_ ^ mix(stream + kGamma));
        return child;
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kSeedSalt = 0x6A09E667F3BCC909ULL;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Stream for realization `index` of a run seeded with `master_seed`.
inline CounterRng realization_stream(std::uint64_t master_seed, std::uint64_t index) {
    return CounterRng(master_seed).split(index);
}

/// Master seed of the streams used at torus side L.
inline std::uint64_t side_seed(std::uint64_t master_seed, int side) {
    return CounterRng(master_seed).split(0x51DE0000ULL + static_cast<std::uint64_t>(side)).key();
}

}  // namespace homlab
