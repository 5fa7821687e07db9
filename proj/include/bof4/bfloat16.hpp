#pragma once

#include <bit>
#include <cstdint>

namespace bof4 {

// 16-bit scaling-constant format: 1 sign bit, 8 exponent bits, 7 mantissa bits
// (the high half of an IEEE-754 binary32). Conversion from binary32 rounds to
// nearest, ties to even; widening back is exact.

inline std::uint16_t float_to_bf16(float v) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    // NaN would be quietened rather than rounded; keep the payload's top bits.
    if ((bits & 0x7fffffffu) > 0x7f800000u) {
        return static_cast<std::uint16_t>((bits >> 16) | 0x0040u);
    }
    const std::uint32_t rounding = 0x7fffu + ((bits >> 16) & 1u);
    return static_cast<std::uint16_t>((bits + rounding) >> 16);
}

inline float bf16_to_float(std::uint16_t h) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

// Round a binary32 value to what survives 16-bit constant storage.
inline float bf16_round(float v) { return bf16_to_float(float_to_bf16(v)); }

} // namespace bof4
