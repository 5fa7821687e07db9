// bof4: design block-wise 4-bit quantization codebooks, quantize/dequantize
// raw float32 tensors, and run error sweeps/ablations that emit CSV.
//
// Exit codes: 0 success, 1 usage, 2 data/format problem, 3 numeric failure
// (including design nonconvergence). Thread count honors BOF4_THREADS.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bof4/builtin.hpp"
#include "bof4/codebook.hpp"
#include "bof4/errors.hpp"
#include "bof4/io.hpp"
#include "bof4/metrics.hpp"
#include "bof4/opq.hpp"
#include "bof4/parallel.hpp"
#include "bof4/quant.hpp"
#include "bof4/random.hpp"

namespace {

using namespace bof4;

int fail(const char* tag, const std::exception& e, int code) {
    std::fprintf(stderr, "error (%s): %s\n", tag, e.what());
    return code;
}

template <typename Fn>
int run_guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const CorruptDataError& e) {
        return fail("corrupt-data", e, 2);
    } catch (const UnsupportedFormatError& e) {
        return fail("unsupported-format", e, 2);
    } catch (const SchemaError& e) {
        return fail("schema", e, 2);
    } catch (const InvalidCodebookError& e) {
        return fail("invalid-codebook", e, 2);
    } catch (const IncompatibleCodebookError& e) {
        return fail("incompatible-codebook", e, 2);
    } catch (const InvalidInputError& e) {
        return fail("invalid-input", e, 2);
    } catch (const DegenerateBlockError& e) {
        return fail("degenerate-block", e, 3);
    } catch (const EmptyRegionError& e) {
        return fail("empty-region", e, 3);
    } catch (const DomainError& e) {
        return fail("domain", e, 3);
    } catch (const NumericError& e) {
        return fail("numeric", e, 3);
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("file", e, 2);
    } catch (const std::exception& e) {
        return fail("internal", e, 3);
    }
}

const char* mode_name(NormalizationMode m) {
    return m == NormalizationMode::Absolute ? "absolute" : "signed";
}
const char* metric_name(Metric m) { return m == Metric::Mse ? "mse" : "mae"; }
const char* objective_name(Objective o) {
    return o == Objective::EndToEnd ? "end_to_end" : "normalized";
}

// Either a builtin name (fixture or on-demand design) or a JSON file path.
Codebook load_codebook(const std::string& ref, int block_size) {
    if (is_builtin_name(ref)) return resolve_codebook(ref, block_size);
    return read_codebook_file(ref);
}

struct DesignArgs {
    std::string output;
    std::string input; // optional raw tensor to fit instead of the model
    std::string name;
    NormalizationMode mode = NormalizationMode::Absolute;
    Metric metric = Metric::Mse;
    Objective objective = Objective::EndToEnd;
    int block_size = 64;
    std::string method = "theoretical";
    std::uint64_t samples = std::uint64_t{1} << 24;
    std::uint64_t seed = 42;
    int max_iterations = 0;
    double eps = 1e-7;
    std::vector<double> constrain;
    bool unconstrained = false;
};

int cmd_design(const DesignArgs& a) {
    CodebookSpec spec;
    spec.block_size = a.block_size;
    spec.mode = a.mode;
    spec.metric = a.metric;
    spec.objective = a.objective;
    spec.centroid_method = a.method == "theoretical" ? CentroidMethod::Theoretical
                                                     : CentroidMethod::Empirical;
    spec.sample_count = a.samples;
    spec.seed = a.seed;
    spec.max_iterations = a.max_iterations;
    spec.convergence_eps = a.eps;
    if (a.unconstrained) {
        spec.constrained_levels.clear();
    } else if (!a.constrain.empty()) {
        spec.constrained_levels = a.constrain;
    } else {
        spec.constrained_levels = default_constraints(a.mode);
    }

    std::string name = a.name;
    if (name.empty()) {
        name = std::string(a.mode == NormalizationMode::Signed ? "bof4s" : "bof4") + "-" +
               metric_name(a.metric);
    }

    std::printf("design: name=%s mode=%s metric=%s objective=%s block_size=%d method=%s\n",
                name.c_str(), mode_name(spec.mode), metric_name(spec.metric),
                objective_name(spec.objective), spec.block_size, a.method.c_str());
    if (spec.centroid_method == CentroidMethod::Empirical && a.input.empty()) {
        std::printf("design: samples=%" PRIu64 " seed=%" PRIu64 " sampler=%s\n",
                    spec.sample_count, spec.seed, kGaussianSamplerName.data());
    }
    std::printf("design: max_iterations=%d eps=%g constrained=[", spec.effective_max_iterations(),
                spec.convergence_eps);
    for (std::size_t i = 0; i < spec.constrained_levels.size(); ++i) {
        std::printf("%s%g", i ? ", " : "", spec.constrained_levels[i]);
    }
    std::printf("] threads=%u\n", thread_count());

    Codebook cb;
    if (!a.input.empty()) {
        spec.centroid_method = CentroidMethod::Empirical;
        const std::vector<float> weights = read_raw_tensor(a.input);
        std::printf("design: fitting %zu weights from %s\n", weights.size(), a.input.c_str());
        cb = lloyd_design_from_samples(spec, weights, name);
    } else {
        BlockMaxModel model{standard_gaussian(), spec.block_size};
        cb = lloyd_design(spec, model, name);
    }

    write_codebook_file(a.output, cb);
    std::printf("design: wrote %s\n", a.output.c_str());
    std::printf("design: iterations=%d final_objective=%.9e converged=%s\n",
                cb.provenance.iterations, cb.provenance.final_objective,
                cb.provenance.converged ? "yes" : "no");
    if (!cb.provenance.converged) {
        std::fprintf(stderr, "error (numeric): design did not converge within %d iterations\n",
                     spec.effective_max_iterations());
        return 3;
    }
    return 0;
}

struct QuantizeArgs {
    std::string input;
    std::string output;
    std::string codebook = "bof4-mse";
    int block_size = 0; // 0 -> take the codebook's own block size
    bool opq = false;
    double q = 0.95;
};

int cmd_quantize(const QuantizeArgs& a) {
    const std::vector<float> weights = read_raw_tensor(a.input);
    // Resolving a builtin name needs the block size first; default 64 there,
    // else defer to the loaded codebook's design-time block size.
    int bs = a.block_size;
    Codebook cb = load_codebook(a.codebook, bs > 0 ? bs : 64);
    if (bs <= 0) bs = cb.spec.block_size;

    std::printf("quantize: input=%s elements=%zu codebook=%s mode=%s block_size=%d opq=%s",
                a.input.c_str(), weights.size(), cb.name.c_str(), mode_name(cb.spec.mode), bs,
                a.opq ? "on" : "off");
    if (a.opq) std::printf(" q=%g", a.q);
    std::printf(" threads=%u\n", thread_count());

    QuantizedTensor qt;
    if (a.opq) {
        BlockMaxModel model{standard_gaussian(), bs};
        qt = quantize_with_outliers(weights, cb, cb.spec.mode, static_cast<std::uint32_t>(bs),
                                    a.q, model);
        std::printf("quantize: outliers=%zu memory_overhead=%.6f%%\n", qt.outliers->indices.size(),
                    100.0 * memory_overhead(qt));
    } else {
        qt = quantize_tensor(weights, cb, cb.spec.mode, static_cast<std::uint32_t>(bs));
    }
    write_quantized_file(a.output, qt);

    const std::vector<float> back = dequantize_tensor(qt);
    std::printf("quantize: wrote %s blocks=%" PRIu64 " round_trip_mae=%.9e round_trip_mse=%.9e\n",
                a.output.c_str(), qt.layout.block_count(), tensor_mae(weights, back),
                tensor_mse(weights, back));
    return 0;
}

struct DequantizeArgs {
    std::string input;
    std::string output;
};

int cmd_dequantize(const DequantizeArgs& a) {
    const QuantizedTensor qt = read_quantized_file(a.input);
    const std::vector<float> weights = dequantize_tensor(qt);
    write_raw_tensor(a.output, weights);
    std::printf("dequantize: input=%s elements=%" PRIu64 " block_size=%u mode=%s outliers=%zu\n",
                a.input.c_str(), qt.layout.element_count, qt.layout.block_size,
                mode_name(qt.mode), qt.outliers ? qt.outliers->indices.size() : std::size_t{0});
    std::printf("dequantize: wrote %s\n", a.output.c_str());
    return 0;
}

struct SweepArgs {
    std::string output;
    std::uint64_t samples = std::uint64_t{1} << 22;
    std::uint64_t seed = 42;
    std::vector<std::uint32_t> block_sizes = {16, 64, 256, 1024};
    std::vector<std::string> codebooks = {"nf4",      "af4",       "bof4-mae",
                                          "bof4-mse", "bof4s-mae", "bof4s-mse"};
    bool opq = false;
    double q = 0.95;
};

int cmd_sweep(const SweepArgs& a) {
    std::printf("sweep: samples=%" PRIu64 " seed=%" PRIu64 " sampler=%s opq=%s", a.samples,
                a.seed, kGaussianSamplerName.data(), a.opq ? "on" : "off");
    if (a.opq) std::printf(" q=%g", a.q);
    std::printf(" threads=%u\n", thread_count());
    std::printf("sweep: block_sizes=[");
    for (std::size_t i = 0; i < a.block_sizes.size(); ++i) {
        std::printf("%s%u", i ? ", " : "", a.block_sizes[i]);
    }
    std::printf("] codebooks=[");
    for (std::size_t i = 0; i < a.codebooks.size(); ++i) {
        std::printf("%s%s", i ? ", " : "", a.codebooks[i].c_str());
    }
    std::printf("]\n");

    const SweepReport report =
        run_sweep(a.codebooks, a.block_sizes, a.samples, a.seed, a.opq, a.q);
    const std::string csv = to_csv(report);
    std::FILE* f = std::fopen(a.output.c_str(), "wb");
    if (!f) throw CorruptDataError("cannot open for writing: " + a.output);
    std::fwrite(csv.data(), 1, csv.size(), f);
    std::fclose(f);
    std::printf("sweep: wrote %s (%zu rows)\n", a.output.c_str(), report.rows.size());
    return 0;
}

struct AblationArgs {
    std::string output;
    std::uint32_t block_size = 64;
    std::uint64_t samples = std::uint64_t{1} << 22;
    std::uint64_t seed = 42;
};

int cmd_ablation(const AblationArgs& a) {
    std::printf("ablation: block_size=%u samples=%" PRIu64 " seed=%" PRIu64
                " sampler=%s threads=%u\n",
                a.block_size, a.samples, a.seed, kGaussianSamplerName.data(), thread_count());
    const SweepReport report = constrained_ablation(a.block_size, a.samples, a.seed);
    const std::string csv = to_csv(report);
    std::FILE* f = std::fopen(a.output.c_str(), "wb");
    if (!f) throw CorruptDataError("cannot open for writing: " + a.output);
    std::fwrite(csv.data(), 1, csv.size(), f);
    std::fclose(f);
    std::printf("ablation: wrote %s (%zu rows)\n", a.output.c_str(), report.rows.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "bof4: block-wise 4-bit absmax quantization - codebook design, tensor "
        "quantize/dequantize, error sweeps"};
    app.require_subcommand(1);
    app.footer("Environment: BOF4_THREADS overrides the worker thread count.\n"
               "Builtin codebooks: nf4, af4, bof4-mae, bof4-mse, bof4s-mae, bof4s-mse.\n"
               "Raw tensors are flat little-endian float32 files.");

    const std::map<std::string, NormalizationMode> mode_map{
        {"absolute", NormalizationMode::Absolute}, {"signed", NormalizationMode::Signed}};
    const std::map<std::string, Metric> metric_map{{"mae", Metric::Mae}, {"mse", Metric::Mse}};
    const std::map<std::string, Objective> objective_map{
        {"end_to_end", Objective::EndToEnd}, {"normalized", Objective::NormalizedOnly}};

    DesignArgs d;
    CLI::App* design = app.add_subcommand("design", "Design a codebook and write it as JSON");
    design->add_option("-o,--output", d.output, "Output codebook JSON path")->required();
    design->add_option("--input", d.input,
                       "Fit to this raw float32 tensor instead of the Gaussian model "
                       "(forces --method empirical)");
    design->add_option("--name", d.name, "Codebook name (default from mode/metric)");
    design->add_option("--mode", d.mode, "Normalization mode [absolute]")
        ->transform(CLI::CheckedTransformer(mode_map, CLI::ignore_case));
    design->add_option("--metric", d.metric, "Error metric to minimize [mse]")
        ->transform(CLI::CheckedTransformer(metric_map, CLI::ignore_case));
    design->add_option("--objective", d.objective, "Objective [end_to_end]")
        ->transform(CLI::CheckedTransformer(objective_map, CLI::ignore_case));
    design->add_option("--block-size", d.block_size, "Block size [64]")
        ->check(CLI::Range(2, 1 << 24));
    design
        ->add_option("--method", d.method,
                     "Centroid rule: theoretical (quadrature) or empirical (Monte Carlo) "
                     "[theoretical]")
        ->check(CLI::IsMember({"theoretical", "empirical"}));
    design->add_option("--samples", d.samples, "Synthetic sample count, empirical only [2^24]");
    design->add_option("--seed", d.seed, "Sampling seed, empirical only [42]");
    design->add_option("--max-iterations", d.max_iterations, "Iteration cap, 0 = default [500]");
    design->add_option("--eps", d.eps, "Convergence threshold on max level movement [1e-7]");
    design->add_option("--constrain", d.constrain,
                       "Pin these levels (repeatable); default -1,0,1 absolute / 0,1 signed");
    design->add_flag("--unconstrained", d.unconstrained, "Pin no levels at all");

    QuantizeArgs qa;
    CLI::App* quantize =
        app.add_subcommand("quantize", "Quantize a raw float32 tensor into a BQT1 container");
    quantize->add_option("-i,--input", qa.input, "Raw float32 tensor path")->required();
    quantize->add_option("-o,--output", qa.output, "Output BQT1 path")->required();
    quantize->add_option("-c,--codebook", qa.codebook,
                         "Builtin codebook name or codebook JSON path [bof4-mse]");
    quantize->add_option("--block-size", qa.block_size,
                         "Quantization block size [codebook's own]");
    quantize->add_flag("--opq", qa.opq, "Preserve outliers at 16-bit precision");
    quantize->add_option("--q", qa.q, "Outlier detection quantile [0.95]")
        ->check(CLI::Range(0.0, 1.0));

    DequantizeArgs da;
    CLI::App* dequantize =
        app.add_subcommand("dequantize", "Reconstruct a raw float32 tensor from a BQT1 container");
    dequantize->add_option("-i,--input", da.input, "BQT1 path")->required();
    dequantize->add_option("-o,--output", da.output, "Output raw float32 tensor path")->required();

    SweepArgs sa;
    CLI::App* sweep = app.add_subcommand(
        "sweep", "Reconstruction-error sweep over codebooks and block sizes, written as CSV");
    sweep->add_option("-o,--output", sa.output, "Output CSV path")->required();
    sweep->add_option("--samples", sa.samples, "Synthetic tensor size [2^22]");
    sweep->add_option("--seed", sa.seed, "Tensor seed [42]");
    sweep->add_option("--block-sizes", sa.block_sizes, "Block sizes [16 64 256 1024]");
    sweep->add_option("--codebooks", sa.codebooks, "Quantizers to compare [all six builtins]");
    sweep->add_flag("--opq", sa.opq, "Also measure outlier-preserving variants");
    sweep->add_option("--q", sa.q, "Outlier detection quantile [0.95]")
        ->check(CLI::Range(0.0, 1.0));

    AblationArgs aa;
    CLI::App* ablation = app.add_subcommand(
        "ablation", "Compare pinned-level variants of the MSE design on one tensor (CSV)");
    ablation->add_option("-o,--output", aa.output, "Output CSV path")->required();
    ablation->add_option("--block-size", aa.block_size, "Block size [64]");
    ablation->add_option("--samples", aa.samples, "Synthetic tensor size [2^22]");
    ablation->add_option("--seed", aa.seed, "Tensor seed [42]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1;
    }

    if (design->parsed()) return run_guarded([&] { return cmd_design(d); });
    if (quantize->parsed()) return run_guarded([&] { return cmd_quantize(qa); });
    if (dequantize->parsed()) return run_guarded([&] { return cmd_dequantize(da); });
    if (sweep->parsed()) return run_guarded([&] { return cmd_sweep(sa); });
    if (ablation->parsed()) return run_guarded([&] { return cmd_ablation(aa); });
    return 1;
}
