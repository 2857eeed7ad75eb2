#pragma once

// Counter-based deterministic random source keyed by (seed, trial, entity).
// Draws are a pure function of the key and a running counter, so trials can
// be generated in any order (or concurrently) with identical results on any
// platform.

#include <cmath>
#include <cstdint>

namespace psbss {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t trial, std::uint64_t entity)
        : state_(detail::mix64(detail::mix64(detail::mix64(seed) ^ trial) ^
                               (entity * 0xd1342543de82ef95ULL))) {}

    std::uint64_t next_u64() {
        counter_++;
        return detail::mix64(state_ ^ (counter_ * 0x2545f4914f6cdd1dULL));
    }

    /// Uniform in (0,1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::uint64_t state_;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace psbss
