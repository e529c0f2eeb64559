#pragma once

// Seeded random streams and deterministic substream derivation.
//
// Every experiment derives its randomness from a single 64-bit seed. Work
// items (sweep cells, replications, Monte-Carlo batches) get their own
// engine keyed by (seed, path...), so results never depend on the order in
// which threads pick up work.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace reshuffle {

using Stream = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Mixes a seed with a path of indices into a new, well-separated seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = detail::splitmix64(seed);
    for (std::uint64_t p : path) {
        h = detail::splitmix64(h ^ detail::splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline Stream make_stream(std::uint64_t seed) { return Stream{seed}; }

inline Stream substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return Stream{derive_seed(seed, path)};
}

/// Draws a seed from the system entropy source.
inline std::uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
}

/// Fixed stream tags so paired experiments can share data draws.
enum class StreamTag : std::uint64_t {
    dataset = 0xda7a,
    visit_order = 0x0dde,
    splits = 0x5b17,
    probes = 0x9b0e,
    points = 0x9011,
    noise = 0x7015,
};

constexpr std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

// The standard distributions are implementation-defined; these are not, so
// a seed reproduces the same data on every toolchain.

/// Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift with rejection).
inline std::uint64_t uniform_index(Stream& rng, std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(rng()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(rng()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Stream& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Stream& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Standard normal variates by the Marsaglia polar method.
class StandardNormal {
public:
    double operator()(Stream& rng) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01(rng) - 1.0;
            v = 2.0 * uniform01(rng) - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// In-place uniform shuffle (Fisher-Yates).
template <class T>
void shuffle(std::span<T> xs, Stream& rng) {
    for (std::size_t i = xs.size(); i > 1; --i) {
        const auto k = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(xs[i - 1], xs[k]);
    }
}

} // namespace reshuffle
