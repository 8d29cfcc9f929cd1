#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ladc {

/// Seedable, splittable random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform and normal variates are derived here rather than through
/// the <random> distributions, whose algorithms are implementation-defined, so
/// a given seed produces the same stream with any standard library:
///   - uniform01: top 53 bits of one engine output, scaled by 2^-53
///   - uniform_index: modulo with rejection of the biased low range
///   - normal: Box-Muller (polar-free form), second variate cached
/// Child streams are seeded with the SplitMix64 finalizer of (seed, stream id).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    // Independent child stream; same (seed, stream) always yields the same child.
    Rng split(std::uint64_t stream) const;

    std::uint64_t next_u64() { return engine_(); }
    double uniform01();
    // Uniform integer in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n);
    double normal();

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace ladc
