#include "bof4/builtin.hpp"

#include <string>

namespace bof4 {

namespace {

// Original normal-float 4-bit table (asymmetric signed variant, 16 levels).
const std::array<float, 16> kNf4 = {
    -1.0f,
    -0.6961928009986877f,
    -0.5250730514526367f,
    -0.39491748809814453f,
    -0.28444138169288635f,
    -0.18477343022823334f,
    -0.09105003625154495f,
    0.0f,
    0.07958029955625534f,
    0.16093020141124725f,
    0.24611230194568634f,
    0.33791524171829224f,
    0.44070982933044434f,
    0.5626170039176941f,
    0.7229568362236023f,
    1.0f,
};

// Published abnormal-float 4-bit table for 64-element blocks.
const std::array<float, 16> kAf4 = {
    -1.0f,         -0.69441008f, -0.51243739f, -0.3736951f,
    -0.25607552f,  -0.14982478f, -0.04934812f, 0.0f,
    0.04273164f,   0.12934483f,  0.21961274f,  0.31675666f,
    0.42563882f,   0.55496234f,  0.72424863f,  1.0f,
};

// Reference tables for the designed families (Absolute mode, I = 64).
const std::array<float, 16> kAbsMae64 = {
    -1.0f,
    -0.7026305794715881f,
    -0.5272703766822815f,
    -0.3946738243103027f,
    -0.2832144796848297f,
    -0.1835313588380814f,
    -0.090308666229248f,
    0.0f,
    0.0789600014686584f,
    0.1598792523145676f,
    0.244986355304718f,
    0.3372218906879425f,
    0.441359281539917f,
    0.565777063369751f,
    0.7299178242683411f,
    1.0f,
};

const std::array<float, 16> kAbsMse64 = {
    -1.0f,
    -0.7535245418548584f,
    -0.579203724861145f,
    -0.4385998845100403f,
    -0.3167679905891418f,
    -0.2059924453496933f,
    -0.1015387624502182f,
    0.0f,
    0.0887245312333107f,
    0.1793769598007202f,
    0.2741499841213226f,
    0.3758211433887482f,
    0.4884937703609467f,
    0.6187058687210083f,
    0.7790452241897583f,
    1.0f,
};

// Signed mode, I = 64.
const std::array<float, 16> kSigMae64 = {
    -0.8018798232078552f,
    -0.6076051592826843f,
    -0.468828022480011f,
    -0.3559602797031403f,
    -0.2576169371604919f,
    -0.1677481383085251f,
    -0.0827366262674332f,
    0.0f,
    0.0789434835314751f,
    0.1597966849803925f,
    0.2448495477437973f,
    0.3371480107307434f,
    0.4412573873996735f,
    0.5656819343566895f,
    0.7298068404197693f,
    1.0f,
};

const std::array<float, 16> kSigMse64 = {
    -0.8568463921546936f,
    -0.6692874431610107f,
    -0.5235266089439392f,
    -0.4004882574081421f,
    -0.2910638153553009f,
    -0.1900092959403992f,
    -0.0938529595732689f,
    0.0f,
    0.0887671709060669f,
    0.1794802695512772f,
    0.2743096053600311f,
    0.3760197460651398f,
    0.4886530041694641f,
    0.6188603639602661f,
    0.7791395783424377f,
    1.0f,
};

// Signed MSE-optimal tables at the other published block sizes.
const std::array<float, 16> kSigMse32 = {
    -0.8732797503471375f,
    -0.6907446384429932f,
    -0.5437039136886597f,
    -0.4173701703548431f,
    -0.3038933575153351f,
    -0.1986017823219299f,
    -0.0981557220220566f,
    0.0f,
    0.0925938412547112f,
    0.187048003077507f,
    0.2855197489261627f,
    0.3907126188278198f,
    0.506283164024353f,
    0.6379748582839966f,
    0.7956376671791077f,
    1.0f,
};

const std::array<float, 16> kSigMse128 = {
    -0.83739173412323f,
    -0.6462452411651611f,
    -0.5028634667396545f,
    -0.3836247622966766f,
    -0.2783779501914978f,
    -0.1815713942050934f,
    -0.0896477326750755f,
    0.0f,
    0.0850915610790253f,
    0.1720834821462631f,
    0.2632072865962982f,
    0.3613293170928955f,
    0.4707452654838562f,
    0.5988966822624207f,
    0.761027991771698f,
    1.0f,
};

const std::array<float, 16> kSigMse256 = {
    -0.8146829009056091f,
    -0.6221838593482971f,
    -0.4820549190044403f,
    -0.3669650852680206f,
    -0.2659871876239777f,
    -0.1733742356300354f,
    -0.0855776593089104f,
    0.0f,
    0.0815095230937004f,
    0.1649149656295776f,
    0.2524392008781433f,
    0.3470274209976196f,
    0.4531534314155579f,
    0.578848659992218f,
    0.7418596744537354f,
    1.0f,
};

// Double-precision MSE-optimal Absolute-mode levels at I=64 (the quadrature
// fixed point the theoretical design path must reproduce).
const std::array<double, 16> kTheoMse64 = {
    -1.0,
    -0.7535689203869577,
    -0.5792681492535123,
    -0.4386720084478466,
    -0.3168191039791481,
    -0.2060291109696586,
    -0.1015640796456471,
    0.0,
    0.0887646748673216,
    0.1794535266886747,
    0.274249773841407,
    0.375951029286045,
    0.4885925268369112,
    0.6187715546288008,
    0.7790828367844242,
    1.0,
};

Codebook make_fixture(std::string name, const std::array<float, 16>& levels,
                      NormalizationMode mode, Metric metric, int block_size,
                      std::string method) {
    Codebook cb;
    cb.name = std::move(name);
    cb.spec.num_levels = 16;
    cb.spec.block_size = block_size;
    cb.spec.mode = mode;
    cb.spec.metric = metric;
    cb.spec.objective = Objective::EndToEnd;
    cb.spec.constrained_levels = default_constraints(mode);
    cb.levels.assign(levels.begin(), levels.end());
    cb.provenance.method = std::move(method);
    validate_codebook(cb);
    return cb;
}

} // namespace

const std::array<float, 16>& nf4_levels() { return kNf4; }
const std::array<float, 16>& af4_levels() { return kAf4; }

const std::array<double, 16>& reference_theoretical_mse_levels_i64() { return kTheoMse64; }

bool is_builtin_name(std::string_view name) {
    return name == "nf4" || name == "af4" || name == "bof4-mae" || name == "bof4-mse" ||
           name == "bof4s-mae" || name == "bof4s-mse";
}

std::optional<Codebook> builtin_fixture(std::string_view name, int block_size) {
    const std::string n(name);
    // The two baselines are fixed tables used at any block size.
    if (n == "nf4") {
        return make_fixture("nf4", kNf4, NormalizationMode::Absolute, Metric::Mse,
                            block_size, "external-fixture");
    }
    if (n == "af4") {
        return make_fixture("af4", kAf4, NormalizationMode::Absolute, Metric::Mae,
                            block_size, "external-fixture");
    }
    if (n == "bof4-mae" && block_size == 64) {
        return make_fixture(n, kAbsMae64, NormalizationMode::Absolute, Metric::Mae, 64,
                            "embedded-fixture");
    }
    if (n == "bof4-mse" && block_size == 64) {
        return make_fixture(n, kAbsMse64, NormalizationMode::Absolute, Metric::Mse, 64,
                            "embedded-fixture");
    }
    if (n == "bof4s-mae" && block_size == 64) {
        return make_fixture(n, kSigMae64, NormalizationMode::Signed, Metric::Mae, 64,
                            "embedded-fixture");
    }
    if (n == "bof4s-mse") {
        switch (block_size) {
            case 32:
                return make_fixture(n, kSigMse32, NormalizationMode::Signed, Metric::Mse,
                                    32, "embedded-fixture");
            case 64:
                return make_fixture(n, kSigMse64, NormalizationMode::Signed, Metric::Mse,
                                    64, "embedded-fixture");
            case 128:
                return make_fixture(n, kSigMse128, NormalizationMode::Signed, Metric::Mse,
                                    128, "embedded-fixture");
            case 256:
                return make_fixture(n, kSigMse256, NormalizationMode::Signed, Metric::Mse,
                                    256, "embedded-fixture");
            default:
                break;
        }
    }
    return std::nullopt;
}

Codebook resolve_codebook(std::string_view name, int block_size) {
    if (!is_builtin_name(name)) {
        throw InvalidInputError("unknown quantizer name: " + std::string(name));
    }
    if (auto fx = builtin_fixture(name, block_size)) return *std::move(fx);
    // Design on demand: theoretical path under a standard-Gaussian model.
    CodebookSpec spec;
    spec.block_size = block_size;
    spec.mode = (name == "bof4s-mae" || name == "bof4s-mse") ? NormalizationMode::Signed
                                                             : NormalizationMode::Absolute;
    spec.metric = (name == "bof4-mae" || name == "bof4s-mae") ? Metric::Mae : Metric::Mse;
    spec.constrained_levels = default_constraints(spec.mode);
    spec.centroid_method = CentroidMethod::Theoretical;
    // Some block sizes contract slowly; a resolved builtin should always be a
    // fully converged table, so allow more than the general-purpose default.
    spec.max_iterations = 2000;
    BlockMaxModel model{standard_gaussian(), block_size};
    return lloyd_design(spec, model, std::string(name));
}

} // namespace bof4
