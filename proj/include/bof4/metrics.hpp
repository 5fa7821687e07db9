#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bof4/codebook.hpp"

namespace bof4 {

// Mean absolute / squared elementwise error, accumulated in extended
// precision with fixed chunking (bit-reproducible regardless of threads).
double tensor_mae(std::span<const float> a, std::span<const float> b);
double tensor_mse(std::span<const float> a, std::span<const float> b);

struct SweepRow {
    std::string name;         // quantizer name
    std::string mode;         // "absolute" | "signed"
    std::string metric;       // metric the codebook optimizes
    std::uint32_t block_size = 0;
    bool opq = false;
    double q = 0.0;           // meaningful only when opq
    double mae = 0.0;
    double mse = 0.0;
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::string sampler; // Gaussian generator identification
};

// Quantize one fixed-seed synthetic Gaussian tensor with every (quantizer,
// block size) pair and record reconstruction errors; when with_opq is set an
// outlier-preserving variant row is added per pair. Codebooks resolve to
// embedded fixtures where published, otherwise to on-demand theoretical
// designs (cached per name/block size within the call).
SweepReport run_sweep(std::span<const std::string> quantizers,
                      std::span<const std::uint32_t> block_sizes,
                      std::uint64_t sample_count, std::uint64_t seed,
                      bool with_opq = false, double q = 0.95);

// MSE-optimal Absolute-mode designs under four pinned-level sets (none, {0},
// {-1,1}, {-1,0,1}), each evaluated on the same synthetic tensor.
SweepReport constrained_ablation(std::uint32_t block_size, std::uint64_t sample_count,
                                 std::uint64_t seed);

// CSV with header name,mode,metric,block_size,opq,q,mae,mse,samples,seed and
// 9-significant-digit reals; q is left empty on non-opq rows.
std::string to_csv(const SweepReport& report);

} // namespace bof4
