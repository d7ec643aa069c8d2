#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace editlab {

// Seed derivation: children are a fixed hash of (parent seed, purpose tag,
// index), so parallel generators never share a stream and reordering calls
// cannot change any stream's content.
namespace seeds {

constexpr std::uint64_t fnv1a(std::string_view tag) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t child(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) {
    return mix(mix(parent ^ fnv1a(tag)) + index);
}

} // namespace seeds

// Deterministic double-precision generator. std::*_distribution is
// implementation-defined, so the uniform and gaussian transforms live here:
// identical seeds give bit-identical streams on any standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng child_of(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) {
        return Rng(seeds::child(parent, tag, index));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_positive() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Standard normal via Box-Muller; consumes exactly two engine draws.
    double gaussian() {
        const double u1 = uniform_positive();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace editlab
