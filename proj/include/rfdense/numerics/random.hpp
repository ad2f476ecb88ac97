#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rfdense {

/// SplitMix64 finalizer; used to derive independent seed streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0);
std::uint64_t hash_name(std::string_view name);

/// Seeded generator with platform-independent distribution transforms.
/// The std:: distributions are implementation-defined, so uniform and
/// normal variates are derived from the raw mt19937_64 stream here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);
    /// Standard normal via Box-Muller (one cached spare).
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rfdense
