#include "bof4/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bof4 {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461; // 1/sqrt(2*pi)
constexpr double kSqrt2Pi = 2.5066282746310005024157653;
constexpr double kInvSqrt2 = 0.7071067811865475244008444;

inline double gauss_pdf(double w) { return kInvSqrt2Pi * std::exp(-0.5 * w * w); }

// erfc-based form keeps full relative accuracy in the lower tail; the upper
// tail of the CDF itself is only accurate absolutely, which is what the
// block-max formulas consume.
inline double gauss_cdf(double w) { return 0.5 * std::erfc(-w * kInvSqrt2); }

// Inverse normal CDF: Acklam's rational approximation polished with one
// Halley step against the erfc-based CDF; accurate to ~1 ulp over (0, 1).
double gauss_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("gauss_quantile: p outside (0,1)");
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = gauss_cdf(x) - p;
    const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
constexpr double kXgk[8] = {0.991455371120812639206854697526329,
                            0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926,
                            0.741531185599394439863864773280788,
                            0.586087235467691130294144838258730,
                            0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245,
                            0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970,
                            0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518,
                            0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550,
                            0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649,
                            0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082,
                           0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975,
                           0.417959183673469387755102040816327};

struct SegmentResult {
    double kronrod;
    double err;
};

SegmentResult gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double res_k = kWgk[7] * fc;
    double res_g = kWg[3] * fc;
    for (int j = 0; j < 7; ++j) {
        const double x = h * kXgk[j];
        const double f1 = f(c - x);
        const double f2 = f(c + x);
        res_k += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) res_g += kWg[j / 2] * (f1 + f2);
    }
    res_k *= h;
    res_g *= h;
    return {res_k, std::abs(res_k - res_g)};
}

double integrate_rec(const std::function<double(double)>& f, double a, double b,
                     double tol, int depth, int max_depth) {
    SegmentResult r = gk15(f, a, b);
    if (r.err <= tol || depth >= max_depth) return r.kronrod;
    const double c = 0.5 * (a + b);
    return integrate_rec(f, a, c, 0.5 * tol, depth + 1, max_depth) +
           integrate_rec(f, c, b, 0.5 * tol, depth + 1, max_depth);
}

} // namespace

DistributionModel standard_gaussian() {
    DistributionModel m;
    m.pdf = [](double w) { return gauss_pdf(w); };
    m.cdf = [](double w) { return gauss_cdf(w); };
    m.quantile = [](double p) { return gauss_quantile(p); };
    m.variance = 1.0;
    m.gaussian_closed_form = true;
    return m;
}

DistributionModel uniform_model(double half_width) {
    if (!(half_width > 0.0)) throw DomainError("uniform_model: half_width must be > 0");
    const double a = half_width;
    DistributionModel m;
    m.pdf = [a](double w) { return std::abs(w) <= a ? 0.5 / a : 0.0; };
    m.cdf = [a](double w) {
        if (w <= -a) return 0.0;
        if (w >= a) return 1.0;
        return 0.5 * (w / a + 1.0);
    };
    m.quantile = [a](double p) {
        if (!(p > 0.0 && p < 1.0)) throw DomainError("uniform quantile: p outside (0,1)");
        return a * (2.0 * p - 1.0);
    };
    m.variance = a * a / 3.0;
    m.gaussian_closed_form = false;
    return m;
}

double block_max_cdf(const BlockMaxModel& model, double m) {
    if (model.block_size < 1) throw DomainError("block_max_cdf: block size must be >= 1");
    if (m <= 0.0) return 0.0;
    const double core = 2.0 * model.dist.cdf(m) - 1.0;
    if (core <= 0.0) return 0.0;
    if (core >= 1.0) return 1.0;
    return std::pow(core, model.block_size);
}

double block_max_pdf(const BlockMaxModel& model, double m) {
    if (model.block_size < 1) throw DomainError("block_max_pdf: block size must be >= 1");
    if (m <= 0.0) return 0.0;
    const double core = 2.0 * model.dist.cdf(m) - 1.0;
    if (core <= 0.0) return 0.0;
    const double I = model.block_size;
    return 2.0 * I * std::pow(core, model.block_size - 1) * model.dist.pdf(m);
}

double block_max_quantile(const BlockMaxModel& model, double q) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("block_max_quantile: q outside (0,1)");
    double hi = 1.0;
    int growth = 0;
    while (block_max_cdf(model, hi) < q) {
        hi *= 2.0;
        if (++growth > 64) throw NumericError("block_max_quantile: bracket growth failed");
    }
    return detail::bisect([&](double m) { return block_max_cdf(model, m) - q; }, 0.0, hi);
}

double cond_cdf_normalized(const BlockMaxModel& model, double x, double m) {
    if (!(m > 0.0)) throw DomainError("cond_cdf_normalized: m must be > 0");
    const double denom = model.dist.cdf(m) - model.dist.cdf(-m);
    if (denom <= 0.0) {
        throw DegenerateBlockError("cond_cdf_normalized: conditional mass underflowed");
    }
    const double num = model.dist.cdf(m * x) - model.dist.cdf(-m);
    return std::clamp(num / denom, 0.0, 1.0);
}

double mixed_cdf_normalized(const BlockMaxModel& model, NormalizationMode mode,
                            double x, double m) {
    if (x < -1.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double I = model.block_size;
    const double cont = detail::cond_cdf_guarded(model, x, m);
    if (mode == NormalizationMode::Absolute) {
        return 0.5 / I + (I - 1.0) / I * cont;
    }
    return (I - 1.0) / I * cont;
}

double cond_expect_region_gaussian(double lo, double hi, double m) {
    if (!(m > 0.0)) throw DomainError("cond_expect_region_gaussian: m must be > 0");
    if (!(lo < hi)) throw DomainError("cond_expect_region_gaussian: empty region");
    // g(m hi) - g(m lo) written via expm1 to survive small m and thin regions.
    const double dg = gauss_pdf(m * lo) *
                      std::expm1(-0.5 * m * m * (hi * hi - lo * lo));
    const double dG = gauss_cdf(m * hi) - gauss_cdf(m * lo);
    if (dG <= 0.0) throw EmptyRegionError("cond_expect_region_gaussian: zero region mass");
    return -dg / (m * dG);
}

double cond_expect_region_general(const BlockMaxModel& model, double lo, double hi,
                                  double m) {
    if (!(m > 0.0)) throw DomainError("cond_expect_region_general: m must be > 0");
    if (!(lo < hi)) throw DomainError("cond_expect_region_general: empty region");
    const double denom = model.dist.cdf(m * hi) - model.dist.cdf(m * lo);
    if (denom <= 0.0) throw EmptyRegionError("cond_expect_region_general: zero region mass");
    const auto& pdf = model.dist.pdf;
    const double num = detail::integrate(
        [&](double x) { return m * x * pdf(m * x); }, lo, hi, 1e-12);
    return num / denom;
}

double edge_mass_fraction(const BlockMaxModel& model, NormalizationMode mode,
                          double left_threshold, double m) {
    if (!(left_threshold >= -1.0 && left_threshold <= 1.0)) {
        throw DomainError("edge_mass_fraction: threshold outside [-1,1]");
    }
    const double I = model.block_size;
    const double tail = detail::cond_cdf_guarded(model, -left_threshold, m);
    if (mode == NormalizationMode::Absolute) {
        return 1.0 / (2.0 * (I - 1.0) * tail + 1.0);
    }
    return 1.0 / ((I - 1.0) * tail + 1.0);
}

double normalized_marginal_cdf(const BlockMaxModel& model, NormalizationMode mode,
                               double x) {
    if (x < -1.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double m_hi = detail::integration_limit(model);
    const double cont = detail::integrate(
        [&](double m) {
            const double pm = block_max_pdf(model, m);
            if (pm == 0.0) return 0.0;
            return pm * detail::cond_cdf_guarded(model, x, m);
        },
        0.0, m_hi);
    const double I = model.block_size;
    const double body = (I - 1.0) / I * std::clamp(cont, 0.0, 1.0);
    return mode == NormalizationMode::Absolute ? 0.5 / I + body : body;
}

double normalized_marginal_quantile(const BlockMaxModel& model, NormalizationMode mode,
                                    double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normalized_marginal_quantile: p outside (0,1)");
    }
    const double I = model.block_size;
    const double left_atom = mode == NormalizationMode::Absolute ? 0.5 / I : 0.0;
    const double top = left_atom + (I - 1.0) / I; // marginal CDF just below +1
    if (p <= left_atom) return -1.0;
    if (p >= top) return 1.0;
    return detail::bisect(
        [&](double x) { return normalized_marginal_cdf(model, mode, x) - p; }, -1.0, 1.0);
}

namespace detail {

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol, int max_depth) {
    if (a == b) return 0.0;
    return integrate_rec(f, a, b, abs_tol, 0, max_depth);
}

double bisect(const std::function<double(double)>& f, double lo, double hi,
              double x_tol, int max_iter) {
    double flo = f(lo);
    if (flo > 0.0) return lo;
    double fhi = f(hi);
    if (fhi < 0.0) return hi;
    for (int i = 0; i < max_iter && hi - lo > x_tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double integration_limit(const BlockMaxModel& model) {
    return block_max_quantile(model, 1.0 - 1e-12);
}

double cond_cdf_guarded(const BlockMaxModel& model, double x, double m) {
    const double denom = model.dist.cdf(m) - model.dist.cdf(-m);
    if (denom < 1e-300) {
        // Limit of the ratio as m -> 0 for a density continuous at the origin.
        return std::clamp(0.5 * (1.0 + x), 0.0, 1.0);
    }
    const double num = model.dist.cdf(m * x) - model.dist.cdf(-m);
    return std::clamp(num / denom, 0.0, 1.0);
}

} // namespace detail

} // namespace bof4
