#include "bof4/opq.hpp"

#include <algorithm>
#include <cmath>

#include "bof4/bfloat16.hpp"
#include "bof4/parallel.hpp"

namespace bof4 {

double block_std(std::span<const float> block) {
    if (block.size() < 2) {
        throw DegenerateBlockError("block_std: need at least 2 elements");
    }
    double mean = 0.0;
    for (float w : block) mean += w;
    mean /= static_cast<double>(block.size());
    double ss = 0.0;
    for (float w : block) {
        const double d = static_cast<double>(w) - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(block.size() - 1));
}

std::vector<std::uint64_t> detect_outliers(std::span<const float> weights,
                                           const BlockLayout& layout, double q,
                                           const BlockMaxModel& model) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("detect_outliers: q outside (0,1)");
    if (layout.element_count != weights.size()) {
        throw InvalidInputError("detect_outliers: layout does not match tensor");
    }
    const double mq = block_max_quantile(model, q);
    const std::uint64_t blocks = layout.block_count();
    std::vector<std::vector<std::uint64_t>> per_chunk;
    const std::size_t grain = 4096;
    per_chunk.resize(blocks == 0 ? 0 : (blocks + grain - 1) / grain);
    parallel_chunks(blocks, grain, [&](std::size_t b0, std::size_t b1, std::size_t chunk) {
        auto& found = per_chunk[chunk];
        for (std::size_t b = b0; b < b1; ++b) {
            const std::uint64_t start = static_cast<std::uint64_t>(b) * layout.block_size;
            const std::uint32_t len = layout.block_length(b);
            if (len < 2) continue;
            const std::span<const float> blk = weights.subspan(start, len);
            const double sigma = block_std(blk);
            if (!(sigma > 0.0)) continue;
            const double threshold = sigma * mq;
            for (std::uint32_t j = 0; j < len; ++j) {
                if (std::abs(static_cast<double>(blk[j])) > threshold) {
                    found.push_back(start + j);
                }
            }
        }
    });
    std::vector<std::uint64_t> out;
    for (const auto& chunk : per_chunk) out.insert(out.end(), chunk.begin(), chunk.end());
    return out;
}

OutlierSet excise_outliers(std::span<float> weights,
                           std::span<const std::uint64_t> indices, double q) {
    OutlierSet set;
    set.q = q;
    set.indices.reserve(indices.size());
    set.values.reserve(indices.size());
    std::uint64_t prev = 0;
    bool first = true;
    for (std::uint64_t idx : indices) {
        if (!first && idx <= prev) {
            throw InvalidInputError("excise_outliers: indices not strictly increasing");
        }
        if (idx >= weights.size()) {
            throw InvalidInputError("excise_outliers: index out of range");
        }
        set.indices.push_back(idx);
        set.values.push_back(float_to_bf16(weights[idx]));
        weights[idx] = 0.0f;
        prev = idx;
        first = false;
    }
    return set;
}

void restore_outliers(std::span<float> weights, const OutlierSet& outliers) {
    if (outliers.indices.size() != outliers.values.size()) {
        throw InvalidInputError("restore_outliers: index/value count mismatch");
    }
    for (std::size_t i = 0; i < outliers.indices.size(); ++i) {
        const std::uint64_t idx = outliers.indices[i];
        if (idx >= weights.size()) {
            throw InvalidInputError("restore_outliers: index out of range");
        }
        weights[idx] = bf16_to_float(outliers.values[i]);
    }
}

double memory_overhead(const QuantizedTensor& qt) {
    const double n = static_cast<double>(qt.layout.element_count);
    const double b = static_cast<double>(qt.layout.block_count());
    const double base = 4.0 * n + 16.0 * b;
    if (!(base > 0.0)) return 0.0;
    const double outliers = qt.outliers ? static_cast<double>(qt.outliers->indices.size()) : 0.0;
    return 80.0 * outliers / base;
}

QuantizedTensor quantize_with_outliers(std::span<const float> weights,
                                       const Codebook& cb, NormalizationMode mode,
                                       std::uint32_t block_size, double q,
                                       const BlockMaxModel& model) {
    const BlockLayout layout{weights.size(), block_size};
    const std::vector<std::uint64_t> idx = detect_outliers(weights, layout, q, model);
    std::vector<float> cleaned(weights.begin(), weights.end());
    OutlierSet set = excise_outliers(cleaned, idx, q);
    QuantizedTensor qt = quantize_tensor(cleaned, cb, mode, block_size);
    qt.outliers = std::move(set);
    return qt;
}

} // namespace bof4
