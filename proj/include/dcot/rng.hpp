#ifndef DCOT_RNG_HPP
#define DCOT_RNG_HPP

#include <cstdint>

namespace dcot {

/*
 * SplitMix64 (Steele, Lea, Flood 2014). The full generator state is one
 * 64-bit word, so a stream can be checkpointed with state() and resumed
 * with from_state(). Output is identical on every platform.
 */
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static SplitMix64 from_state(std::uint64_t state) noexcept { return SplitMix64(state); }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept
    {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept { return (*this)() % n; }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

inline SplitMix64 seeded_rng(std::uint64_t seed) noexcept { return SplitMix64(seed); }

} // namespace dcot

#endif
