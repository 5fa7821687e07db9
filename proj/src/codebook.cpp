#include "bof4/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "bof4/random.hpp"

namespace bof4 {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Shared structural helpers
// ---------------------------------------------------------------------------

std::vector<double> thresholds_from(std::span<const float> levels) {
    std::vector<double> t(levels.size() + 1);
    t.front() = -kInf;
    t.back() = kInf;
    for (std::size_t i = 1; i < levels.size(); ++i) {
        t[i] = 0.5 * (static_cast<double>(levels[i - 1]) + static_cast<double>(levels[i]));
    }
    return t;
}

std::vector<double> thresholds_from(std::span<const double> levels) {
    std::vector<double> t(levels.size() + 1);
    t.front() = -kInf;
    t.back() = kInf;
    for (std::size_t i = 1; i < levels.size(); ++i) {
        t[i] = 0.5 * (levels[i - 1] + levels[i]);
    }
    return t;
}

void validate_spec(const CodebookSpec& spec) {
    if (spec.num_levels < 2) throw InvalidCodebookError("spec: need at least 2 levels");
    if (spec.block_size < 1) throw InvalidCodebookError("spec: block size must be >= 1");
    if (spec.convergence_eps <= 0.0) throw InvalidCodebookError("spec: eps must be > 0");
    std::vector<double> c = spec.constrained_levels;
    std::sort(c.begin(), c.end());
    if (std::adjacent_find(c.begin(), c.end()) != c.end()) {
        throw InvalidCodebookError("spec: duplicate constrained levels");
    }
    for (double v : c) {
        if (!(v >= -1.0 && v <= 1.0)) {
            throw InvalidCodebookError("spec: constrained level outside [-1,1]");
        }
    }
    if (static_cast<int>(c.size()) > spec.num_levels) {
        throw InvalidCodebookError("spec: more constraints than levels");
    }
    if (spec.centroid_method == CentroidMethod::Empirical &&
        spec.sample_count < static_cast<std::uint64_t>(spec.num_levels) * 100) {
        throw InvalidCodebookError("spec: need at least 100 samples per level");
    }
}

// ---------------------------------------------------------------------------
// Theoretical centroid machinery
//
// All region integrals run over the block-max variable m on [0, m_hi] with the
// integrand short-circuited to 0 wherever the block-max density underflows.
// The conditional distribution of a normalized value given M = m is the
// continuous part on (-1, 1) scaled by (I-1)/I plus endpoint atoms per mode.
// ---------------------------------------------------------------------------

struct TheoCtx {
    const BlockMaxModel& model;
    NormalizationMode mode;
    double m_hi;
    double atom_left;  // mass at -1
    double atom_right; // mass at +1
    double cont_scale; // (I-1)/I
};

TheoCtx make_ctx(const BlockMaxModel& model, NormalizationMode mode) {
    const double I = model.block_size;
    TheoCtx ctx{model, mode, detail::integration_limit(model), 0.0, 0.0, (I - 1.0) / I};
    if (mode == NormalizationMode::Absolute) {
        ctx.atom_left = 0.5 / I;
        ctx.atom_right = 0.5 / I;
    } else {
        ctx.atom_right = 1.0 / I;
    }
    return ctx;
}

struct RegionMoments {
    double mass;           // conditional probability of the region given m
    double mean_mass;      // E[X 1_region | m] = mean * mass
};

// Conditional mass and first moment of region [lo, hi) given M = m.
RegionMoments region_moments(const TheoCtx& ctx, double lo, double hi, double m) {
    const double a = std::max(lo, -1.0);
    const double b = std::min(hi, 1.0);
    RegionMoments r{0.0, 0.0};
    if (a < b) {
        const auto& cdf = ctx.model.dist.cdf;
        const double denom = cdf(m) - cdf(-m);
        if (denom >= 1e-300) {
            if (ctx.model.dist.gaussian_closed_form) {
                const double dG = cdf(m * b) - cdf(m * a);
                const double dg = ctx.model.dist.pdf(m * a) *
                                  std::expm1(-0.5 * m * m * (b * b - a * a));
                r.mass = ctx.cont_scale * dG / denom;
                r.mean_mass = -ctx.cont_scale * dg / (m * denom);
            } else {
                const double dF = cdf(m * b) - cdf(m * a);
                r.mass = ctx.cont_scale * dF / denom;
                if (dF > 0.0) {
                    const auto& pdf = ctx.model.dist.pdf;
                    const double num = detail::integrate(
                        [&](double x) { return m * x * pdf(m * x); }, a, b, 1e-12);
                    r.mean_mass = ctx.cont_scale * num / denom;
                }
            }
        } else {
            // Block-max mass this small never survives the p_M factor; keep the
            // small-m limit (uniform conditional on (-1,1)) for completeness.
            r.mass = ctx.cont_scale * 0.5 * (b - a);
            r.mean_mass = ctx.cont_scale * 0.25 * (b * b - a * a);
        }
    }
    if (lo <= -1.0 && hi > -1.0) {
        r.mass += ctx.atom_left;
        r.mean_mass -= ctx.atom_left;
    }
    if (hi > 1.0) {
        r.mass += ctx.atom_right;
        r.mean_mass += ctx.atom_right;
    }
    return r;
}

double ipow(double m, int p) {
    switch (p) {
        case 0: return 1.0;
        case 1: return m;
        default: return m * m;
    }
}

double centroid_mse_theo(const TheoCtx& ctx, double lo, double hi, int m_power) {
    const double num = detail::integrate(
        [&](double m) {
            const double pm = block_max_pdf(ctx.model, m);
            if (pm == 0.0) return 0.0;
            return ipow(m, m_power) * pm * region_moments(ctx, lo, hi, m).mean_mass;
        },
        0.0, ctx.m_hi);
    const double den = detail::integrate(
        [&](double m) {
            const double pm = block_max_pdf(ctx.model, m);
            if (pm == 0.0) return 0.0;
            return ipow(m, m_power) * pm * region_moments(ctx, lo, hi, m).mass;
        },
        0.0, ctx.m_hi);
    if (!(den > 1e-30)) throw EmptyRegionError("theoretical centroid: region has no mass");
    return num / den;
}

double mixed_cdf_ctx(const TheoCtx& ctx, double x, double m) {
    if (x < -1.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return ctx.atom_left + ctx.cont_scale * detail::cond_cdf_guarded(ctx.model, x, m);
}

double centroid_mae_theo(const TheoCtx& ctx, double lo, double hi, int m_power) {
    const double bl = std::max(lo, -1.0);
    const double bh = std::min(hi, 1.0);
    auto h = [&](double t) {
        return detail::integrate(
            [&](double m) {
                const double pm = block_max_pdf(ctx.model, m);
                if (pm == 0.0) return 0.0;
                const double target =
                    0.5 * (mixed_cdf_ctx(ctx, hi, m) + mixed_cdf_ctx(ctx, lo, m));
                return ipow(m, m_power) * pm * (mixed_cdf_ctx(ctx, t, m) - target);
            },
            0.0, ctx.m_hi);
    };
    const double root = detail::bisect(h, bl, bh);
    // A root pinned against a clamped boundary means the conditional median
    // sits inside an endpoint atom; return the atom exactly.
    if (hi > 1.0 && bh - root <= 1e-8) return 1.0;
    if (ctx.mode == NormalizationMode::Absolute && lo < -1.0 && root - bl <= 1e-8) {
        return -1.0;
    }
    return root;
}

int m_power_for(Metric metric, Objective objective) {
    if (objective == Objective::NormalizedOnly) return 0;
    return metric == Metric::Mse ? 2 : 1;
}

// Conditional contribution of region [lo, hi) with representative c to the
// per-weight error, given M = m (error already weighted by region mass).
double region_error(const TheoCtx& ctx, Metric metric, double lo, double hi, double c,
                    double m) {
    const double a = std::max(lo, -1.0);
    const double b = std::min(hi, 1.0);
    double err = 0.0;
    if (lo <= -1.0 && hi > -1.0) {
        const double d = -1.0 - c;
        err += ctx.atom_left * (metric == Metric::Mse ? d * d : std::abs(d));
    }
    if (hi > 1.0) {
        const double d = 1.0 - c;
        err += ctx.atom_right * (metric == Metric::Mse ? d * d : std::abs(d));
    }
    if (a < b) {
        const auto& cdf = ctx.model.dist.cdf;
        const auto& pdf = ctx.model.dist.pdf;
        const double denom = cdf(m) - cdf(-m);
        if (denom >= 1e-300) {
            double cont = 0.0;
            if (metric == Metric::Mse) {
                if (ctx.model.dist.gaussian_closed_form) {
                    const double ua = m * a;
                    const double ub = m * b;
                    const double s0 = cdf(ub) - cdf(ua);
                    const double s1 = -(pdf(ua) * std::expm1(-0.5 * (ub * ub - ua * ua))) / m;
                    const double s2 = (s0 - (ub * pdf(ub) - ua * pdf(ua))) / (m * m);
                    cont = s2 - 2.0 * c * s1 + c * c * s0;
                } else {
                    cont = detail::integrate(
                        [&](double x) {
                            const double d = x - c;
                            return d * d * m * pdf(m * x);
                        },
                        a, b, 1e-12);
                }
            } else {
                if (ctx.model.dist.gaussian_closed_form) {
                    auto piece = [&](double p, double q) {
                        // Int_p^q (x - c) m g(m x) dx
                        const double s0 = cdf(m * q) - cdf(m * p);
                        const double s1 =
                            -(pdf(m * p) * std::expm1(-0.5 * m * m * (q * q - p * p))) / m;
                        return s1 - c * s0;
                    };
                    const double t = std::clamp(c, a, b);
                    cont = -piece(a, t) + piece(t, b);
                } else {
                    cont = detail::integrate(
                        [&](double x) { return std::abs(x - c) * m * pdf(m * x); }, a, b,
                        1e-12);
                }
            }
            err += ctx.cont_scale * cont / denom;
        }
    }
    return err;
}

double objective_theoretical(const TheoCtx& ctx, Metric metric, int m_power,
                             std::span<const double> levels) {
    const std::vector<double> th = thresholds_from(levels);
    double total = 0.0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        total += detail::integrate(
            [&](double m) {
                const double pm = block_max_pdf(ctx.model, m);
                if (pm == 0.0) return 0.0;
                return ipow(m, m_power) * pm *
                       region_error(ctx, metric, th[l], th[l + 1], levels[l], m);
            },
            0.0, ctx.m_hi);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Empirical centroid machinery: one global sort, prefix sums, per-region
// lookups by binary search on the region thresholds.
// ---------------------------------------------------------------------------

struct EmpiricalSet {
    std::vector<WeightedSample> sorted; // ascending by x
    std::vector<double> pw;             // prefix of w^e
    std::vector<double> pwx;            // prefix of w^e * x
    std::vector<double> pwx2;           // prefix of w^e * x^2
    int weight_exp = 2;

    void build_prefixes() {
        const std::size_t n = sorted.size();
        pw.assign(n + 1, 0.0);
        pwx.assign(n + 1, 0.0);
        pwx2.assign(n + 1, 0.0);
        double sw = 0.0, swx = 0.0, swx2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = sorted[i].x;
            const double w = sorted[i].w;
            const double we = weight_exp == 0 ? 1.0 : (weight_exp == 1 ? w : w * w);
            sw += we;
            swx += we * x;
            swx2 += we * x * x;
            pw[i + 1] = sw;
            pwx[i + 1] = swx;
            pwx2[i + 1] = swx2;
        }
    }

    std::size_t bound(double threshold) const {
        if (threshold == -kInf) return 0;
        if (threshold == kInf) return sorted.size();
        auto it = std::lower_bound(sorted.begin(), sorted.end(), threshold,
                                   [](const WeightedSample& s, double t) { return s.x < t; });
        return static_cast<std::size_t>(it - sorted.begin());
    }
};

// Normalize raw weights block-wise into (x, |constant|) samples; all-zero
// blocks contribute nothing. Only whole blocks are used.
template <class T>
std::vector<WeightedSample> normalize_blocks(std::span<const T> weights, int block_size,
                                             NormalizationMode mode) {
    std::vector<WeightedSample> out;
    const std::size_t blocks = weights.size() / static_cast<std::size_t>(block_size);
    out.reserve(blocks * block_size);
    for (std::size_t b = 0; b < blocks; ++b) {
        const T* blk = weights.data() + b * block_size;
        int jmax = 0;
        double amax = std::abs(static_cast<double>(blk[0]));
        for (int j = 1; j < block_size; ++j) {
            const double a = std::abs(static_cast<double>(blk[j]));
            if (a > amax) {
                amax = a;
                jmax = j;
            }
        }
        if (amax == 0.0) continue;
        const double c = mode == NormalizationMode::Signed
                             ? static_cast<double>(blk[jmax])
                             : amax;
        for (int j = 0; j < block_size; ++j) {
            out.push_back({static_cast<float>(static_cast<double>(blk[j]) / c),
                           static_cast<float>(amax)});
        }
    }
    return out;
}

EmpiricalSet draw_empirical_set(const CodebookSpec& spec) {
    const std::size_t blocks =
        static_cast<std::size_t>(spec.sample_count / static_cast<std::uint64_t>(spec.block_size));
    if (blocks == 0) throw InvalidCodebookError("empirical design: not enough samples for one block");
    std::vector<double> raw(blocks * static_cast<std::size_t>(spec.block_size));
    fill_gaussian(std::span<double>(raw), spec.seed);
    EmpiricalSet set;
    set.weight_exp = spec.objective == Objective::NormalizedOnly
                         ? 0
                         : (spec.metric == Metric::Mse ? 2 : 1);
    set.sorted = normalize_blocks(std::span<const double>(raw), spec.block_size, spec.mode);
    raw.clear();
    raw.shrink_to_fit();
    std::sort(set.sorted.begin(), set.sorted.end(),
              [](const WeightedSample& a, const WeightedSample& b) { return a.x < b.x; });
    set.build_prefixes();
    return set;
}

double empirical_region_mean(const EmpiricalSet& set, std::size_t lo, std::size_t hi) {
    const double sw = set.pw[hi] - set.pw[lo];
    if (!(sw > 0.0)) throw EmptyRegionError("empirical centroid: empty region");
    return (set.pwx[hi] - set.pwx[lo]) / sw;
}

double empirical_region_median(const EmpiricalSet& set, std::size_t lo, std::size_t hi) {
    if (hi <= lo) throw EmptyRegionError("empirical centroid: empty region");
    const double total = set.pw[hi] - set.pw[lo];
    if (!(total > 0.0)) throw EmptyRegionError("empirical centroid: zero region weight");
    // Smallest j in (lo, hi] whose weight prefix strictly exceeds the rest.
    std::size_t a = lo + 1, b = hi;
    while (a < b) {
        const std::size_t mid = a + (b - a) / 2;
        if (2.0 * (set.pw[mid] - set.pw[lo]) > total) {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    return set.sorted[a - 1].x;
}

double empirical_objective(const EmpiricalSet& set, Metric metric,
                           std::span<const double> levels) {
    const std::vector<double> th = thresholds_from(levels);
    double total = 0.0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const std::size_t lo = set.bound(th[l]);
        const std::size_t hi = set.bound(th[l + 1]);
        if (hi <= lo) continue;
        const double c = levels[l];
        if (metric == Metric::Mse) {
            total += (set.pwx2[hi] - set.pwx2[lo]) - 2.0 * c * (set.pwx[hi] - set.pwx[lo]) +
                     c * c * (set.pw[hi] - set.pw[lo]);
        } else {
            const std::size_t k = set.bound(c);
            const std::size_t split = std::clamp(k, lo, hi);
            total += c * (set.pw[split] - set.pw[lo]) - (set.pwx[split] - set.pwx[lo]);
            total += (set.pwx[hi] - set.pwx[split]) - c * (set.pw[hi] - set.pw[split]);
        }
    }
    return total / static_cast<double>(set.sorted.size());
}

// ---------------------------------------------------------------------------
// Initialization: constrained levels are pinned to quantile-derived slots, the
// free levels fill each gap at equally spaced quantiles of the normalized
// marginal distribution.
// ---------------------------------------------------------------------------

struct InitPlan {
    std::vector<double> levels;
    std::vector<bool> constrained;
};

InitPlan initial_levels(const CodebookSpec& spec,
                        const std::function<double(double)>& marginal_cdf,
                        const std::function<double(double)>& marginal_quantile) {
    const int L = spec.num_levels;
    std::vector<double> cons = spec.constrained_levels;
    std::sort(cons.begin(), cons.end());
    const int nc = static_cast<int>(cons.size());

    std::vector<int> slot(nc);
    for (int i = 0; i < nc; ++i) {
        // ceil with a small negative bias keeps integer-boundary quantiles
        // (e.g. the exact-median constraint 0) in the lower slot regardless of
        // quadrature rounding.
        const double pos = static_cast<double>(L) * marginal_cdf(cons[i]);
        slot[i] = std::clamp(static_cast<int>(std::ceil(pos - 1e-6)), 1, L);
    }
    for (int i = 1; i < nc; ++i) slot[i] = std::max(slot[i], slot[i - 1] + 1);
    if (nc > 0) slot[nc - 1] = std::min(slot[nc - 1], L);
    for (int i = nc - 2; i >= 0; --i) slot[i] = std::min(slot[i], slot[i + 1] - 1);
    if (nc > 0 && slot[0] < 1) throw InvalidCodebookError("init: constraints do not fit");

    InitPlan plan;
    plan.levels.assign(L, 0.0);
    plan.constrained.assign(L, false);
    for (int i = 0; i < nc; ++i) {
        plan.levels[slot[i] - 1] = cons[i];
        plan.constrained[slot[i] - 1] = true;
    }
    // Fill each free gap between pinned slots (or virtual boundaries at
    // quantiles 0 and 1) with equally spaced quantiles.
    int gap_start = 0; // index just past the previous pinned slot
    double q_lo = 0.0;
    for (int i = 0; i <= nc; ++i) {
        const int gap_end = i < nc ? slot[i] - 1 : L; // exclusive
        const double q_hi = i < nc ? marginal_cdf(cons[i]) : 1.0;
        const int k = gap_end - gap_start;
        for (int j = 1; j <= k; ++j) {
            const double q =
                q_lo + (q_hi - q_lo) * static_cast<double>(j) / static_cast<double>(k + 1);
            plan.levels[gap_start + j - 1] = marginal_quantile(q);
        }
        if (i < nc) {
            gap_start = slot[i];
            q_lo = q_hi;
        }
    }
    for (int i = 1; i < L; ++i) {
        if (!(plan.levels[i] > plan.levels[i - 1])) {
            throw NumericError("init: quantile seeding produced non-increasing levels");
        }
    }
    return plan;
}

Codebook finalize(const CodebookSpec& spec, std::string name,
                  std::span<const double> levels, Provenance prov) {
    Codebook cb;
    cb.name = std::move(name);
    cb.spec = spec;
    cb.levels.assign(levels.begin(), levels.end());
    cb.provenance = std::move(prov);
    validate_codebook(cb);
    return cb;
}

} // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

std::vector<double> default_constraints(NormalizationMode mode) {
    if (mode == NormalizationMode::Absolute) return {-1.0, 0.0, 1.0};
    return {0.0, 1.0};
}

std::vector<double> Codebook::thresholds() const {
    return thresholds_from(std::span<const float>(levels));
}

void validate_codebook(const Codebook& cb) {
    if (static_cast<int>(cb.levels.size()) != cb.spec.num_levels) {
        throw InvalidCodebookError("codebook: level count does not match spec");
    }
    if (cb.levels.size() < 2) throw InvalidCodebookError("codebook: need at least 2 levels");
    for (std::size_t i = 1; i < cb.levels.size(); ++i) {
        if (!(cb.levels[i] > cb.levels[i - 1])) {
            throw InvalidCodebookError("codebook: levels not strictly increasing");
        }
    }
    for (double c : cb.spec.constrained_levels) {
        const float cf = static_cast<float>(c);
        if (std::find(cb.levels.begin(), cb.levels.end(), cf) == cb.levels.end()) {
            throw InvalidCodebookError("codebook: constrained level missing from table");
        }
    }
}

int nearest_neighbor_partition(std::span<const double> thresholds, double x) {
    if (thresholds.size() < 2) throw InvalidCodebookError("partition: malformed thresholds");
    // Number of interior thresholds <= x; a tie belongs to the higher region.
    auto it = std::upper_bound(thresholds.begin() + 1, thresholds.end() - 1, x);
    return static_cast<int>(it - (thresholds.begin() + 1));
}

double centroid_mse_empirical(std::span<const WeightedSample> samples) {
    if (samples.empty()) throw EmptyRegionError("centroid_mse_empirical: no samples");
    double sw = 0.0, swx = 0.0;
    for (const auto& s : samples) {
        const double w2 = static_cast<double>(s.w) * s.w;
        sw += w2;
        swx += w2 * s.x;
    }
    if (!(sw > 0.0)) throw EmptyRegionError("centroid_mse_empirical: zero total weight");
    return swx / sw;
}

double centroid_mae_empirical(std::span<const WeightedSample> samples) {
    if (samples.empty()) throw EmptyRegionError("centroid_mae_empirical: no samples");
    std::vector<WeightedSample> s(samples.begin(), samples.end());
    std::stable_sort(s.begin(), s.end(),
                     [](const WeightedSample& a, const WeightedSample& b) { return a.x < b.x; });
    double total = 0.0;
    for (const auto& v : s) total += v.w;
    if (!(total > 0.0)) throw EmptyRegionError("centroid_mae_empirical: zero total weight");
    double prefix = 0.0;
    for (const auto& v : s) {
        prefix += v.w;
        if (2.0 * prefix > total) return v.x;
    }
    return s.back().x;
}

double centroid_normalized_only(std::span<const WeightedSample> samples, Metric metric) {
    if (samples.empty()) throw EmptyRegionError("centroid_normalized_only: no samples");
    if (metric == Metric::Mse) {
        double sx = 0.0;
        for (const auto& s : samples) sx += s.x;
        return sx / static_cast<double>(samples.size());
    }
    std::vector<WeightedSample> unit(samples.begin(), samples.end());
    for (auto& s : unit) s.w = 1.0f;
    return centroid_mae_empirical(unit);
}

double centroid_mse_theoretical(const BlockMaxModel& model, NormalizationMode mode,
                                double lo, double hi, Objective objective) {
    if (!(lo < hi)) throw DomainError("centroid_mse_theoretical: empty region");
    return centroid_mse_theo(make_ctx(model, mode), lo, hi,
                             m_power_for(Metric::Mse, objective));
}

double centroid_mae_theoretical(const BlockMaxModel& model, NormalizationMode mode,
                                double lo, double hi, Objective objective) {
    if (!(lo < hi)) throw DomainError("centroid_mae_theoretical: empty region");
    return centroid_mae_theo(make_ctx(model, mode), lo, hi,
                             m_power_for(Metric::Mae, objective));
}

double codebook_objective(const BlockMaxModel& model, const CodebookSpec& spec,
                          std::span<const float> levels) {
    std::vector<double> lv(levels.begin(), levels.end());
    return objective_theoretical(make_ctx(model, spec.mode), spec.metric,
                                 m_power_for(spec.metric, spec.objective), lv);
}

namespace {

struct DesignEngine {
    const CodebookSpec& spec;
    const TheoCtx* theo = nullptr;
    const EmpiricalSet* emp = nullptr;
    int m_power = 0;

    double centroid(double lo, double hi) const {
        if (theo) {
            return spec.metric == Metric::Mse ? centroid_mse_theo(*theo, lo, hi, m_power)
                                              : centroid_mae_theo(*theo, lo, hi, m_power);
        }
        const std::size_t a = emp->bound(lo);
        const std::size_t b = emp->bound(hi);
        return spec.metric == Metric::Mse ? empirical_region_mean(*emp, a, b)
                                          : empirical_region_median(*emp, a, b);
    }

    double objective(std::span<const double> levels) const {
        if (theo) return objective_theoretical(*theo, spec.metric, m_power, levels);
        return empirical_objective(*emp, spec.metric, levels);
    }
};

Codebook run_lloyd(const CodebookSpec& spec, std::string name, InitPlan plan,
                   const DesignEngine& engine, Provenance prov) {
    const int L = spec.num_levels;
    std::vector<double> levels = std::move(plan.levels);
    std::vector<double> best_levels = levels;
    double best_objective = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    const int max_iter = spec.effective_max_iterations();

    for (int it = 0; it < max_iter; ++it) {
        ++iterations;
        const std::vector<double> th = thresholds_from(levels);
        std::vector<double> next = levels;
        for (int l = 0; l < L; ++l) {
            if (plan.constrained[l]) continue;
            try {
                next[l] = engine.centroid(th[l], th[l + 1]);
            } catch (const EmptyRegionError&) {
                // Re-seed a massless region at its (clamped) midpoint.
                next[l] = 0.5 * (std::max(th[l], -1.0) + std::min(th[l + 1], 1.0));
            }
        }
        double movement = 0.0;
        for (int l = 0; l < L; ++l) movement = std::max(movement, std::abs(next[l] - levels[l]));
        levels = std::move(next);
        const double obj = engine.objective(levels);
        if (obj < best_objective) {
            best_objective = obj;
            best_levels = levels;
        }
        if (movement < spec.convergence_eps) {
            converged = true;
            break;
        }
    }

    prov.iterations = iterations;
    prov.converged = converged;
    if (!converged) {
        levels = best_levels;
        prov.final_objective = best_objective;
    } else {
        prov.final_objective = engine.objective(levels);
    }
    return finalize(spec, std::move(name), levels, std::move(prov));
}

} // namespace

Codebook lloyd_design(const CodebookSpec& spec, const BlockMaxModel& model,
                      std::string name) {
    validate_spec(spec);
    if (model.block_size != spec.block_size) {
        throw IncompatibleCodebookError("lloyd_design: model block size != spec block size");
    }
    if (model.block_size < 2) {
        throw InvalidCodebookError("lloyd_design: block size must be >= 2 (a lone max has no companions)");
    }
    const TheoCtx ctx = make_ctx(model, spec.mode);
    auto cdf = [&](double c) { return normalized_marginal_cdf(model, spec.mode, c); };
    auto quant = [&](double p) { return normalized_marginal_quantile(model, spec.mode, p); };
    InitPlan plan = initial_levels(spec, cdf, quant);

    DesignEngine engine{spec};
    engine.m_power = m_power_for(spec.metric, spec.objective);
    Provenance prov;
    if (spec.centroid_method == CentroidMethod::Theoretical) {
        engine.theo = &ctx;
        prov.method = "theoretical";
        return run_lloyd(spec, std::move(name), std::move(plan), engine, std::move(prov));
    }
    const EmpiricalSet set = draw_empirical_set(spec);
    engine.emp = &set;
    prov.method = "empirical";
    prov.seed = spec.seed;
    prov.sample_count = spec.sample_count;
    return run_lloyd(spec, std::move(name), std::move(plan), engine, std::move(prov));
}

Codebook lloyd_design_from_samples(const CodebookSpec& spec,
                                   std::span<const float> weights, std::string name) {
    validate_spec(spec);
    if (spec.centroid_method != CentroidMethod::Empirical) {
        throw InvalidCodebookError("design from samples requires the empirical method");
    }
    EmpiricalSet set;
    set.weight_exp = spec.objective == Objective::NormalizedOnly
                         ? 0
                         : (spec.metric == Metric::Mse ? 2 : 1);
    set.sorted = normalize_blocks(weights, spec.block_size, spec.mode);
    if (set.sorted.size() < static_cast<std::size_t>(spec.num_levels) * 100) {
        throw InvalidInputError("design from samples: not enough usable samples");
    }
    std::sort(set.sorted.begin(), set.sorted.end(),
              [](const WeightedSample& a, const WeightedSample& b) { return a.x < b.x; });
    set.build_prefixes();

    const double n = static_cast<double>(set.sorted.size());
    auto cdf = [&](double c) {
        auto it = std::upper_bound(set.sorted.begin(), set.sorted.end(), c,
                                   [](double t, const WeightedSample& s) { return t < s.x; });
        return static_cast<double>(it - set.sorted.begin()) / n;
    };
    auto quant = [&](double p) {
        const auto idx = static_cast<std::size_t>(
            std::clamp<double>(std::floor(p * n), 0.0, n - 1.0));
        return static_cast<double>(set.sorted[idx].x);
    };
    InitPlan plan = initial_levels(spec, cdf, quant);

    DesignEngine engine{spec};
    engine.m_power = m_power_for(spec.metric, spec.objective);
    engine.emp = &set;
    Provenance prov;
    prov.method = "empirical";
    prov.sample_count = set.sorted.size();
    return run_lloyd(spec, std::move(name), std::move(plan), engine, std::move(prov));
}

double compare_codebooks(const Codebook& cb_a, const Codebook& cb_b,
                         const BlockMaxModel& model) {
    if (cb_a.levels.size() != cb_b.levels.size()) {
        throw IncompatibleCodebookError("compare_codebooks: level counts differ");
    }
    if (cb_a.spec.block_size != cb_b.spec.block_size ||
        model.block_size != cb_a.spec.block_size) {
        throw IncompatibleCodebookError("compare_codebooks: block sizes differ");
    }
    const std::vector<double> th = cb_a.thresholds();
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < cb_a.levels.size(); ++l) {
        const double p = normalized_marginal_cdf(model, cb_a.spec.mode, th[l + 1]) -
                         normalized_marginal_cdf(model, cb_a.spec.mode, th[l]);
        const double a = cb_a.levels[l];
        const double d = a - static_cast<double>(cb_b.levels[l]);
        num += p * d * d;
        den += p * a * a;
    }
    if (!(den > 0.0)) throw DomainError("compare_codebooks: reference energy is zero");
    if (num == 0.0) return -kInf;
    return 10.0 * std::log10(num / den);
}

} // namespace bof4
