#pragma once

// Deterministic random streams.
//
// The experiment harness promises byte-identical output for a fixed config
// regardless of worker count, so every task draws from its own substream
// derived from (master seed, task index).  That contract needs a generator
// with a stable cross-platform bit stream; std::<random> distributions are
// implementation-defined, so we carry our own splitmix64 + xoshiro256++.

#include <cstdint>

#include "reclab/common.hpp"

namespace reclab {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 output function (Steele, Lea, Flood).
inline std::uint64_t mix64(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ seeded through splitmix64.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) {
            sm += detail::kGolden;
            word = detail::mix64(sm);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    // Uniform double in [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t s_[4];
};

// Reproducible, pairwise-distinct substreams.  index -> master + f(index) is
// injective (golden-ratio stride is odd), and mix64 is a bijection, so
// distinct task indices can never collide on the derived seed.
inline Rng derive_substream(std::uint64_t master_seed, std::uint64_t task_index) {
    if (task_index >= (1ull << 63))
        throw domain_error("derive_substream: task index exceeds 2^63 guard");
    const std::uint64_t derived =
        detail::mix64(master_seed ^ detail::mix64(task_index * detail::kGolden + 1));
    return Rng(derived);
}

}  // namespace reclab
