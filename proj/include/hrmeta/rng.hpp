#pragma once

#include <cstdint>
#include <random>

namespace hrmeta {

// splitmix64; used to derive well-separated substream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t id) {
    return mix64(mix64(seed) ^ mix64(id + 0x632be59bd9b4e019ull));
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t id1,
                                    std::uint64_t id2) {
    return substream_seed(substream_seed(seed, id1), id2);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace hrmeta
