#pragma once

#include <cstdint>
#include <random>

namespace obpuf {

using Rng = std::mt19937_64;

// SplitMix64 step; used to whiten seeds and derive independent substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic substream seed from a base seed and one or more stream ids.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t s = base ^ 0x6a09e667f3bcc909ULL;
    splitmix64(s);
    s ^= stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(derive_seed(seed, 0x52de9cbd)); }

inline double std_normal(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

inline double uniform01(Rng& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(rng);
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(rng);
}

}  // namespace obpuf
