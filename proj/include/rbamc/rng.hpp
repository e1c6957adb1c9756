#pragma once

#include <cstdint>
#include <initializer_list>

namespace rbamc {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Folds a list of integers into one seed. Order-sensitive.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// xoshiro256** generator with portable uniform/normal draws, so that every
/// stream is bit-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal (Box-Muller, both variates used).
    double normal();

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rbamc
