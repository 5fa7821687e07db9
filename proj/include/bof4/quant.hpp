#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bof4/codebook.hpp"
#include "bof4/opq_types.hpp"

namespace bof4 {

// How a flat tensor is carved into blocks; the final block may be short.
struct BlockLayout {
    std::uint64_t element_count = 0;
    std::uint32_t block_size = 64;

    std::uint64_t block_count() const {
        return block_size == 0 ? 0
                               : (element_count + block_size - 1) / block_size;
    }
    std::uint32_t block_length(std::uint64_t b) const {
        const std::uint64_t start = b * block_size;
        const std::uint64_t remain = element_count - start;
        return static_cast<std::uint32_t>(remain < block_size ? remain : block_size);
    }
};

struct QuantizedTensor {
    BlockLayout layout;
    NormalizationMode mode = NormalizationMode::Absolute;
    std::array<float, 16> levels{};       // sorted codebook levels
    std::vector<std::uint8_t> codes;      // packed 4-bit, ceil(N/2) bytes
    std::vector<std::uint16_t> constants; // one 16-bit constant per block
    std::optional<OutlierSet> outliers;   // present when preservation was on
};

// Block scaling constant, rounded to the 16-bit constant format:
//   Absolute: max |w|; Signed: the value at the first index of max |w|.
// An all-zero block yields 0 and sets *degenerate when provided.
float block_constant(std::span<const float> block, NormalizationMode mode,
                     bool* degenerate = nullptr);

// Two codes per byte: element 2i in the low nibble of byte i, 2i+1 in the
// high nibble; an odd final element leaves the last high nibble zero.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed,
                                       std::uint64_t element_count);

// Block-quantize a tensor: per block compute the constant, normalize, and
// assign each value to its nearest level (threshold ties go to the higher
// region). All-zero blocks store constant 0 and the code of the level closest
// to zero. Rejects non-finite input and any codebook that is not 16 levels in
// the requested mode.
QuantizedTensor quantize_tensor(std::span<const float> weights, const Codebook& cb,
                                NormalizationMode mode, std::uint32_t block_size);

// Reconstruct: constant * level per element, then restore preserved outliers
// if present.
std::vector<float> dequantize_tensor(const QuantizedTensor& qt);

} // namespace bof4
