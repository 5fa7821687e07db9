#include "bof4/quant.hpp"

#include <algorithm>
#include <cmath>

#include "bof4/bfloat16.hpp"
#include "bof4/opq.hpp"
#include "bof4/parallel.hpp"

namespace bof4 {

namespace {

// Code of the level nearest zero; preferred fill for degenerate blocks.
int zero_code(const std::array<float, 16>& levels) {
    int best = 0;
    for (int i = 1; i < 16; ++i) {
        if (std::abs(levels[i]) < std::abs(levels[best])) best = i;
    }
    return best;
}

} // namespace

float block_constant(std::span<const float> block, NormalizationMode mode,
                     bool* degenerate) {
    if (block.empty()) throw DegenerateBlockError("block_constant: empty block");
    std::size_t jmax = 0;
    float amax = std::abs(block[0]);
    for (std::size_t j = 1; j < block.size(); ++j) {
        const float a = std::abs(block[j]);
        if (a > amax) { // first occurrence wins ties
            amax = a;
            jmax = j;
        }
    }
    if (degenerate) *degenerate = amax == 0.0f;
    const float raw = mode == NormalizationMode::Signed ? block[jmax] : amax;
    return bf16_round(raw);
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes) {
    std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0u);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > 15u) throw InvalidInputError("pack_codes: code exceeds 4 bits");
        if (i % 2 == 0) {
            out[i / 2] = codes[i];
        } else {
            out[i / 2] = static_cast<std::uint8_t>(out[i / 2] | (codes[i] << 4));
        }
    }
    return out;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed,
                                       std::uint64_t element_count) {
    if (packed.size() != (element_count + 1) / 2) {
        throw CorruptDataError("unpack_codes: packed size does not match element count");
    }
    std::vector<std::uint8_t> out(element_count);
    for (std::uint64_t i = 0; i < element_count; ++i) {
        const std::uint8_t byte = packed[i / 2];
        out[i] = i % 2 == 0 ? byte & 0x0fu : byte >> 4;
    }
    return out;
}

QuantizedTensor quantize_tensor(std::span<const float> weights, const Codebook& cb,
                                NormalizationMode mode, std::uint32_t block_size) {
    if (block_size == 0) throw InvalidInputError("quantize: block size must be >= 1");
    if (cb.levels.size() != 16) {
        throw IncompatibleCodebookError("quantize: codebook must have 16 levels");
    }
    if (cb.spec.mode != mode) {
        throw IncompatibleCodebookError("quantize: codebook mode does not match request");
    }
    validate_codebook(cb);

    QuantizedTensor qt;
    qt.layout = {weights.size(), block_size};
    qt.mode = mode;
    std::copy(cb.levels.begin(), cb.levels.end(), qt.levels.begin());

    const std::vector<double> th = cb.thresholds();
    const double* interior = th.data() + 1; // 15 finite midpoints
    const int zc = zero_code(qt.levels);

    const std::uint64_t blocks = qt.layout.block_count();
    qt.constants.assign(blocks, 0u);
    std::vector<std::uint8_t> codes(weights.size());

    std::vector<bool> bad(std::max<std::uint64_t>(blocks, 1), false);
    parallel_chunks(blocks, 4096, [&](std::size_t b0, std::size_t b1, std::size_t) {
        for (std::size_t b = b0; b < b1; ++b) {
            const std::uint64_t start = static_cast<std::uint64_t>(b) * block_size;
            const std::uint32_t len = qt.layout.block_length(b);
            const std::span<const float> blk = weights.subspan(start, len);
            for (float w : blk) {
                if (!std::isfinite(w)) {
                    bad[b] = true;
                    return;
                }
            }
            bool degenerate = false;
            const float c = block_constant(blk, mode, &degenerate);
            qt.constants[b] = float_to_bf16(c);
            if (degenerate) {
                std::fill(codes.begin() + start, codes.begin() + start + len,
                          static_cast<std::uint8_t>(zc));
                continue;
            }
            for (std::uint32_t j = 0; j < len; ++j) {
                const double x = static_cast<double>(blk[j]) / static_cast<double>(c);
                // Count interior thresholds <= x: ties promote to the higher region.
                const int code = static_cast<int>(
                    std::upper_bound(interior, interior + 15, x) - interior);
                codes[start + j] = static_cast<std::uint8_t>(code);
            }
        }
    });
    for (std::uint64_t b = 0; b < blocks; ++b) {
        if (bad[b]) throw InvalidInputError("quantize: non-finite weight");
    }
    qt.codes = pack_codes(codes);
    return qt;
}

std::vector<float> dequantize_tensor(const QuantizedTensor& qt) {
    const std::uint64_t n = qt.layout.element_count;
    if (qt.codes.size() != (n + 1) / 2) {
        throw CorruptDataError("dequantize: code byte count does not match layout");
    }
    if (qt.constants.size() != qt.layout.block_count()) {
        throw CorruptDataError("dequantize: constant count does not match layout");
    }
    std::vector<float> out(n);
    parallel_chunks(qt.layout.block_count(), 4096, [&](std::size_t b0, std::size_t b1,
                                                       std::size_t) {
        for (std::size_t b = b0; b < b1; ++b) {
            const std::uint64_t start = static_cast<std::uint64_t>(b) * qt.layout.block_size;
            const std::uint32_t len = qt.layout.block_length(b);
            const float c = bf16_to_float(qt.constants[b]);
            for (std::uint32_t j = 0; j < len; ++j) {
                const std::uint64_t i = start + j;
                const std::uint8_t byte = qt.codes[i / 2];
                const std::uint8_t code = i % 2 == 0 ? byte & 0x0fu : byte >> 4;
                out[i] = c * qt.levels[code];
            }
        }
    });
    if (qt.outliers) restore_outliers(out, *qt.outliers);
    return out;
}

} // namespace bof4
