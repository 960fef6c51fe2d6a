#pragma once
// Reproducible random streams.
//
// Every random decision in the engine draws from an mt19937_64 whose seed is a
// pure function of (run seed, iteration) at the root and of (parent stream,
// part index) below it, so a node's stream is fixed by its path in the
// refinement tree and never by scheduling or worker count.

#include <cstdint>
#include <random>

namespace compex {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

inline std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(base) ^ splitmix64(index + 1));
}

inline Rng make_stream(std::uint64_t base, std::uint64_t index) { return Rng(stream_seed(base, index)); }

}  // namespace compex
