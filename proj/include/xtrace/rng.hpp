#pragma once

#include <cmath>
#include <cstdint>

namespace xtrace {

// Deterministic splitmix64 stream. The standard <random> distributions are
// implementation-defined, so everything that must reproduce byte-identical
// datasets across toolchains goes through this generator instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Box-Muller, no spare caching so the stream position is call-count only
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    // derive an unrelated stream from this seed and a stream tag
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
        Rng r(seed ^ (0xD1B54A32D192ED03ULL * (tag + 1)));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

} // namespace xtrace
