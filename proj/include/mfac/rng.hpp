#pragma once

#include <cmath>
#include <cstdint>

namespace mfac {

/// Named random sub-streams. Every draw in a run is addressed by
/// (seed, epoch, stream, k, i, j, c), so the same tuple always yields the
/// same variate no matter how work is scheduled or where a run resumes.
enum class Stream : std::uint64_t {
    weight_init = 1,
    init_mean = 2,
    init_var = 3,
    init_particle = 4,
    action = 5,
    noise = 6,
    eval_particle = 7,
};

namespace detail {

/// splitmix64 finalizer; bijective 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double to_unit(std::uint64_t bits) {
    // 53 significant bits -> [0, 1)
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Stateless counter-based generator bound to (seed, epoch).
class RngStream {
public:
    RngStream(std::uint64_t seed, std::int64_t epoch)
        : key_(detail::mix64(seed ^ detail::mix64(0x6d666163ULL + static_cast<std::uint64_t>(epoch)))) {}

    /// Uniform double in [0, 1).
    double uniform(Stream s, std::int64_t k, std::int64_t i, std::int64_t j, std::int64_t c) const {
        return detail::to_unit(word(s, k, i, j, c, 0));
    }

    /// Standard normal via Box-Muller on two sub-draws of the same counter.
    double normal(Stream s, std::int64_t k, std::int64_t i, std::int64_t j, std::int64_t c) const {
        const double u1 = detail::to_unit(word(s, k, i, j, c, 1) | 1u);  // keep away from 0
        const double u2 = detail::to_unit(word(s, k, i, j, c, 2));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::uint64_t word(Stream s, std::int64_t k, std::int64_t i, std::int64_t j, std::int64_t c,
                       std::uint64_t sub) const {
        std::uint64_t h = key_;
        h = detail::mix64(h ^ (static_cast<std::uint64_t>(s) * 0xd6e8feb86659fd93ULL));
        h = detail::mix64(h ^ (static_cast<std::uint64_t>(k) + 0x1000000000000001ULL));
        h = detail::mix64(h ^ (static_cast<std::uint64_t>(i) + 0x2000000000000003ULL));
        h = detail::mix64(h ^ (static_cast<std::uint64_t>(j) + 0x3000000000000005ULL));
        h = detail::mix64(h ^ (static_cast<std::uint64_t>(c) + 0x4000000000000007ULL));
        return detail::mix64(h ^ sub);
    }

    std::uint64_t key_;
};

}  // namespace mfac
