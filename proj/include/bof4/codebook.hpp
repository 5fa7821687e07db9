#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bof4/dist.hpp"

namespace bof4 {

// Which reconstruction error the centroid rule minimizes.
enum class Metric { Mae, Mse };

// What the error is measured on: the denormalized weights (each region
// contribution weighted by the block constant), or the normalized values
// alone (unweighted), which ignores how much a block's constant amplifies
// its error.
enum class Objective { EndToEnd, NormalizedOnly };

// Centroid evaluation route: closed-form/quadrature against the model, or
// sample statistics over a fixed draw.
enum class CentroidMethod { Theoretical, Empirical };

struct CodebookSpec {
    int num_levels = 16;
    int block_size = 64;
    NormalizationMode mode = NormalizationMode::Absolute;
    Metric metric = Metric::Mse;
    Objective objective = Objective::EndToEnd;
    // Levels pinned to fixed values; initialized there and never recomputed.
    std::vector<double> constrained_levels;
    CentroidMethod centroid_method = CentroidMethod::Theoretical;
    std::uint64_t sample_count = std::uint64_t{1} << 24; // Empirical only
    std::uint64_t seed = 42;                             // Empirical only
    int max_iterations = 0; // 0 -> 500
    double convergence_eps = 1e-7;

    // Reaching eps=1e-7 takes ~260-290 alternations at block size 64 for both
    // centroid rules, so both default to the same budget.
    int effective_max_iterations() const {
        return max_iterations > 0 ? max_iterations : 500;
    }
};

// Default pinned levels: {-1, 0, 1} for Absolute, {0, 1} for Signed (the
// Signed lower end carries no point mass, so -1 is left free).
std::vector<double> default_constraints(NormalizationMode mode);

struct Provenance {
    std::string method; // "theoretical" | "empirical" | fixture tags
    std::uint64_t seed = 0;
    std::uint64_t sample_count = 0;
    int iterations = 0;
    double final_objective = 0.0;
    bool converged = true;
};

struct Codebook {
    std::string name;
    CodebookSpec spec;
    std::vector<float> levels; // sorted ascending, 32-bit representable
    Provenance provenance;

    // Region boundaries: midpoints between adjacent levels, with -inf/+inf
    // sentinels; size levels.size() + 1. A value equal to a threshold belongs
    // to the higher region.
    std::vector<double> thresholds() const;
};

// Validates sortedness/uniqueness and that every constrained level is present.
void validate_codebook(const Codebook& cb);

// Region index in [0, L-1] for a normalized value; ties at a threshold go up.
int nearest_neighbor_partition(std::span<const double> thresholds, double x);

struct WeightedSample {
    float x; // normalized value in [-1, 1]
    float w; // magnitude of the block constant (>= 0)
};

// Weighted mean Sum(w^2 x) / Sum(w^2); errors on empty input.
double centroid_mse_empirical(std::span<const WeightedSample> samples);

// Weighted median: stable-sort by x, then the first sample index k (1-based)
// whose weight prefix exceeds the remaining weight; minimizes Sum w |x - c|.
double centroid_mae_empirical(std::span<const WeightedSample> samples);

// Unweighted mean / median over the samples (the NormalizedOnly rule).
double centroid_normalized_only(std::span<const WeightedSample> samples, Metric metric);

// Model-based centroid of the region [lo, hi) (thresholds may be +/-inf; the
// normalized variable lives in [-1, 1] with endpoint atoms per mode).
// MSE: ratio of block-max integrals of the conditional region mean.
// MAE: root of the conditional weighted-median condition, by bisection.
double centroid_mse_theoretical(const BlockMaxModel& model, NormalizationMode mode,
                                double lo, double hi,
                                Objective objective = Objective::EndToEnd);
double centroid_mae_theoretical(const BlockMaxModel& model, NormalizationMode mode,
                                double lo, double hi,
                                Objective objective = Objective::EndToEnd);

// Expected per-weight reconstruction error of a level table under the model,
// by quadrature (MSE -> squared error, MAE -> absolute error, weighted per
// the objective).
double codebook_objective(const BlockMaxModel& model, const CodebookSpec& spec,
                          std::span<const float> levels);

// Alternating nearest-neighbor partition / centroid update. Theoretical mode
// integrates against the model; Empirical mode draws spec.sample_count
// synthetic weights with spec.seed, normalizes them per block, and uses
// sample centroids. Constrained levels never move. Returns a codebook whose
// levels are narrowed to 32-bit floats.
Codebook lloyd_design(const CodebookSpec& spec, const BlockMaxModel& model,
                      std::string name = {});

// Empirical design over caller-provided raw weights (normalized internally
// with spec.mode / spec.block_size; all-zero blocks are skipped).
Codebook lloyd_design_from_samples(const CodebookSpec& spec,
                                   std::span<const float> weights,
                                   std::string name = {});

// Probability-weighted log-distance between two level tables (dB):
// 10 log10( Sum_l P[R_l] (a_l - b_l)^2 / Sum_l P[R_l] a_l^2 ), regions and
// probabilities taken from cb_a under the model. -inf for identical tables.
double compare_codebooks(const Codebook& cb_a, const Codebook& cb_b,
                         const BlockMaxModel& model);

} // namespace bof4
