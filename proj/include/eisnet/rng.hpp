#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace eisnet {

/// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic generator with platform-independent draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are not, so all conversions to
/// floating point and bounded integers are done here.
///
/// Children are derived from the construction seed and a key only, so a
/// child stream does not depend on how many draws the parent has made.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix64(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::size_t below(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller.
    double normal();

    Rng child(std::uint64_t key) const { return Rng(mix64(seed_ ^ mix64(key + 0x632be59bd9b4e019ULL))); }
    Rng child(std::string_view tag) const;
    Rng child(std::string_view tag, std::uint64_t key) const { return child(tag).child(key); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// FNV-1a over raw bytes. Stable across platforms.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    return fnv1a(s.data(), s.size(), h);
}

} // namespace eisnet
