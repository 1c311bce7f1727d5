#pragma once

#include <bit>
#include <cstdint>

namespace mergescope {

// bfloat16 <-> binary32. A bf16 value is exactly the top 16 bits of the
// binary32 pattern, so widening is lossless and narrowing only has to decide
// what to do with the low 16 mantissa bits.

inline float bf16_to_f32(std::uint16_t h) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

// Round-to-nearest-even narrowing. NaNs keep their sign/exponent and get a
// forced mantissa bit so a signaling payload below bit 16 cannot collapse
// into an infinity.
inline std::uint16_t f32_to_bf16(float f) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    if ((u & 0x7fffffffu) > 0x7f800000u) {
        return static_cast<std::uint16_t>((u >> 16) | 0x0040u);
    }
    const std::uint32_t lsb = (u >> 16) & 1u;
    return static_cast<std::uint16_t>((u + 0x7fffu + lsb) >> 16);
}

} // namespace mergescope
