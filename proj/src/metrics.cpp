#include "bof4/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "bof4/builtin.hpp"
#include "bof4/opq.hpp"
#include "bof4/parallel.hpp"
#include "bof4/quant.hpp"
#include "bof4/random.hpp"

namespace bof4 {

namespace {

enum class ErrKind { Abs, Sq };

double reduce_error(std::span<const float> a, std::span<const float> b, ErrKind kind) {
    if (a.size() != b.size()) throw InvalidInputError("error metric: length mismatch");
    if (a.empty()) throw InvalidInputError("error metric: empty tensors");
    const std::size_t grain = 1u << 16;
    std::vector<long double> partial((a.size() + grain - 1) / grain, 0.0L);
    parallel_chunks(a.size(), grain, [&](std::size_t i0, std::size_t i1, std::size_t c) {
        long double acc = 0.0L;
        if (kind == ErrKind::Abs) {
            for (std::size_t i = i0; i < i1; ++i) {
                acc += std::abs(static_cast<long double>(a[i]) - b[i]);
            }
        } else {
            for (std::size_t i = i0; i < i1; ++i) {
                const long double d = static_cast<long double>(a[i]) - b[i];
                acc += d * d;
            }
        }
        partial[c] = acc;
    });
    long double total = 0.0L;
    for (long double p : partial) total += p;
    return static_cast<double>(total / static_cast<long double>(a.size()));
}

std::string mode_name(NormalizationMode mode) {
    return mode == NormalizationMode::Absolute ? "absolute" : "signed";
}

std::string metric_name(Metric metric) { return metric == Metric::Mse ? "mse" : "mae"; }

SweepRow measure(const std::string& name, const Codebook& cb,
                 std::span<const float> tensor, std::uint32_t block_size, bool opq,
                 double q, std::uint64_t seed, const BlockMaxModel& model) {
    QuantizedTensor qt =
        opq ? quantize_with_outliers(tensor, cb, cb.spec.mode, block_size, q, model)
            : quantize_tensor(tensor, cb, cb.spec.mode, block_size);
    const std::vector<float> rec = dequantize_tensor(qt);
    SweepRow row;
    row.name = name;
    row.mode = mode_name(cb.spec.mode);
    row.metric = metric_name(cb.spec.metric);
    row.block_size = block_size;
    row.opq = opq;
    row.q = opq ? q : 0.0;
    row.mae = tensor_mae(tensor, rec);
    row.mse = tensor_mse(tensor, rec);
    row.samples = tensor.size();
    row.seed = seed;
    return row;
}

} // namespace

double tensor_mae(std::span<const float> a, std::span<const float> b) {
    return reduce_error(a, b, ErrKind::Abs);
}

double tensor_mse(std::span<const float> a, std::span<const float> b) {
    return reduce_error(a, b, ErrKind::Sq);
}

SweepReport run_sweep(std::span<const std::string> quantizers,
                      std::span<const std::uint32_t> block_sizes,
                      std::uint64_t sample_count, std::uint64_t seed, bool with_opq,
                      double q) {
    if (sample_count == 0) throw InvalidInputError("run_sweep: need samples");
    std::vector<float> tensor(sample_count);
    fill_gaussian(std::span<float>(tensor), seed);

    SweepReport report;
    report.sampler = std::string(kGaussianSamplerName);
    std::map<std::pair<std::string, std::uint32_t>, Codebook> cache;
    for (std::uint32_t bs : block_sizes) {
        const BlockMaxModel model{standard_gaussian(), static_cast<int>(bs)};
        for (const std::string& name : quantizers) {
            auto key = std::make_pair(name, bs);
            auto it = cache.find(key);
            if (it == cache.end()) {
                it = cache.emplace(key, resolve_codebook(name, static_cast<int>(bs))).first;
            }
            const Codebook& cb = it->second;
            report.rows.push_back(
                measure(name, cb, tensor, bs, false, q, seed, model));
            if (with_opq) {
                report.rows.push_back(measure(name, cb, tensor, bs, true, q, seed, model));
            }
        }
    }
    return report;
}

SweepReport constrained_ablation(std::uint32_t block_size, std::uint64_t sample_count,
                                 std::uint64_t seed) {
    if (sample_count == 0) throw InvalidInputError("ablation: need samples");
    std::vector<float> tensor(sample_count);
    fill_gaussian(std::span<float>(tensor), seed);

    struct Variant {
        const char* name;
        std::vector<double> constraints;
    };
    const Variant variants[] = {
        {"bof4-mse-free", {}},
        {"bof4-mse-fix0", {0.0}},
        {"bof4-mse-fix1", {-1.0, 1.0}},
        {"bof4-mse-fix01", {-1.0, 0.0, 1.0}},
    };

    const BlockMaxModel model{standard_gaussian(), static_cast<int>(block_size)};
    SweepReport report;
    report.sampler = std::string(kGaussianSamplerName);
    for (const auto& v : variants) {
        CodebookSpec spec;
        spec.block_size = static_cast<int>(block_size);
        spec.mode = NormalizationMode::Absolute;
        spec.metric = Metric::Mse;
        spec.constrained_levels = v.constraints;
        spec.centroid_method = CentroidMethod::Theoretical;
        // The {-1,1}-pinned variant needs ~600 alternations; don't let the
        // general-purpose default cut any variant short.
        spec.max_iterations = 2000;
        const Codebook cb = lloyd_design(spec, model, v.name);
        report.rows.push_back(measure(v.name, cb, tensor, block_size, false, 0.95, seed, model));
    }
    return report;
}

std::string to_csv(const SweepReport& report) {
    std::string out = "name,mode,metric,block_size,opq,q,mae,mse,samples,seed\n";
    char buf[512];
    for (const SweepRow& r : report.rows) {
        if (r.opq) {
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%u,1,%.9g,%.9g,%.9g,%llu,%llu\n",
                          r.name.c_str(), r.mode.c_str(), r.metric.c_str(), r.block_size,
                          r.q, r.mae, r.mse,
                          static_cast<unsigned long long>(r.samples),
                          static_cast<unsigned long long>(r.seed));
        } else {
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%u,0,,%.9g,%.9g,%llu,%llu\n",
                          r.name.c_str(), r.mode.c_str(), r.metric.c_str(), r.block_size,
                          r.mae, r.mse,
                          static_cast<unsigned long long>(r.samples),
                          static_cast<unsigned long long>(r.seed));
        }
        out += buf;
    }
    return out;
}

} // namespace bof4
