#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bof4/codebook.hpp"
#include "bof4/opq_types.hpp"
#include "bof4/quant.hpp"

namespace bof4 {

// Corrected sample standard deviation sqrt(Sum (w - mean)^2 / (n - 1));
// blocks shorter than 2 elements have no spread estimate.
double block_std(std::span<const float> block);

// Flat indices of elements whose magnitude exceeds sigma_b * Q_M(q), where
// sigma_b is the block's sample std and Q_M the block-max quantile of the
// model at probability q. Blocks with fewer than 2 elements or zero spread
// flag nothing. Indices strictly increasing.
std::vector<std::uint64_t> detect_outliers(std::span<const float> weights,
                                           const BlockLayout& layout, double q,
                                           const BlockMaxModel& model);

// Zero the flagged positions in place, recording the original values in the
// 16-bit constant format. Indices must be strictly increasing and in range.
OutlierSet excise_outliers(std::span<float> weights,
                           std::span<const std::uint64_t> indices, double q);

// Write preserved values (widened from 16-bit) back over the reconstruction.
void restore_outliers(std::span<float> weights, const OutlierSet& outliers);

// Extra storage of the preserved set relative to the packed tensor:
// 80 bits per outlier over (4 bits per element + 16 bits per block).
double memory_overhead(const QuantizedTensor& qt);

// Convenience pipeline: detect on the original weights, excise, quantize the
// cleaned tensor, attach the preserved set.
QuantizedTensor quantize_with_outliers(std::span<const float> weights,
                                       const Codebook& cb, NormalizationMode mode,
                                       std::uint32_t block_size, double q,
                                       const BlockMaxModel& model);

} // namespace bof4
