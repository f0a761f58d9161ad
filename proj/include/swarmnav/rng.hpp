#pragma once

#include <cstdint>
#include <random>

namespace swarmnav {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Seedable generator whose output is identical on every conforming platform.
///
/// Raw bits come from std::mt19937_64 (its sequence is fixed by the standard).
/// The real-valued conversions are done here instead of through
/// std::uniform_real_distribution / std::normal_distribution, whose algorithms
/// are implementation-defined:
///   uniform01  = ((x >> 11) + 0.5) * 2^-53     open interval (0, 1)
///   normal     = Box-Muller, cosine branch only (one normal per two uniforms)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace swarmnav
