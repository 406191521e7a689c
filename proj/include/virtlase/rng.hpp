#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace virtlase {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). Output is a
/// pure function of (key, counter), so sharded and serial consumers agree
/// bit-for-bit as long as they address the same counters.
class Philox4x32
{
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
    {
    }
    Philox4x32(std::uint32_t k0, std::uint32_t k1) : key_{k0, k1} {}

    Block operator()(Block counter) const
    {
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            counter = single_round(counter, key);
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return counter;
    }

    /// Counter layout used throughout: (index low, index high, sub-index, stream tag).
    Block draw(std::uint64_t index, std::uint32_t sub, std::uint32_t stream) const
    {
        return (*this)({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), sub, stream});
    }

private:
    static Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k)
    {
        const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
        const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
        return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }

    std::array<std::uint32_t, 2> key_;
};

/// Uniform double in [0, 1) from two 32-bit words (53 random bits).
inline double unit_interval(std::uint32_t hi, std::uint32_t lo)
{
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return double(bits) * 0x1.0p-53;
}

/// Exp(1) variate; never infinite because 1 - u >= 2^-53.
inline double unit_exponential(std::uint32_t hi, std::uint32_t lo)
{
    return -std::log1p(-unit_interval(hi, lo));
}

/// Two independent standard normals by Box-Muller from one Philox block.
inline std::array<double, 2> standard_normal_pair(const Philox4x32::Block& block)
{
    const double u1 = 1.0 - unit_interval(block[0], block[1]); // (0, 1]
    const double u2 = unit_interval(block[2], block[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phase = 2.0 * 3.14159265358979323846 * u2;
    return {r * std::cos(phase), r * std::sin(phase)};
}

} // namespace virtlase
