#pragma once

// Deterministic random streams.
//
// Every stochastic routine takes an explicitly seeded stream; nothing reads
// hidden entropy. Work that fans out over (series, draw) pairs uses
// Rng::substream so each unit of work owns an independent generator and the
// result never depends on thread scheduling or worker count.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace ant {

namespace detail {

// splitmix64 finalizer, used to turn arbitrary keys into well mixed seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace detail

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(detail::splitmix64(seed)) {}

    // Independent stream for work unit (a, b) under a master seed.
    static Rng substream(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
        std::uint64_t k = detail::splitmix64(master ^ 0x6a09e667f3bcc909ull);
        k = detail::splitmix64(k ^ detail::splitmix64(a + 1));
        k = detail::splitmix64(k ^ detail::splitmix64(b + 0x2545f4914f6cdd1dull));
        return Rng(k);
    }

    std::uint64_t raw() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. The spare value is deliberately not
    // cached: every call consumes exactly two engine draws, which keeps
    // substreams reproducible no matter how calls interleave.
    double normal() {
        double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    // Uniform integer in [lo, hi], both inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw std::invalid_argument("uniform_int needs lo <= hi");
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        std::uint64_t x = engine_();
        return lo + static_cast<std::int64_t>(
                        (static_cast<unsigned __int128>(x) * span) >> 64);
    }

  private:
    static constexpr double kTwoPi = 6.283185307179586476925286766559;
    std::mt19937_64 engine_;
};

}  // namespace ant
