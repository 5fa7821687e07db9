#pragma once

#include <functional>

#include "bof4/errors.hpp"

namespace bof4 {

// How a block is normalized by its scaling constant.
//   Absolute: divide by max |w|; the largest-magnitude element maps to +/-1,
//             the normalized variable has point masses 1/(2I) at both -1 and +1.
//   Signed:   divide by the signed value of the largest-magnitude element; it
//             maps to exactly +1, the point mass 1/I sits at +1 only.
enum class NormalizationMode { Absolute, Signed };

// Symmetric, zero-mean source distribution for individual weights.
struct DistributionModel {
    std::function<double(double)> pdf;
    std::function<double(double)> cdf;
    std::function<double(double)> quantile;
    double variance = 1.0;
    // True when conditional region expectations may use the standard-normal
    // closed form instead of generic quadrature.
    bool gaussian_closed_form = false;
};

DistributionModel standard_gaussian();
// Uniform on [-half_width, half_width]; exercises the generic quadrature path.
DistributionModel uniform_model(double half_width);

// A weight distribution together with the block size I whose per-block
// maximum-magnitude statistic M is being modeled.
struct BlockMaxModel {
    DistributionModel dist;
    int block_size = 64;
};

// P[M <= m] = (2 F_W(m) - 1)^I for m >= 0, 0 below.
double block_max_cdf(const BlockMaxModel& model, double m);

// Density of M: 2 I (2 F_W(m) - 1)^(I-1) p_W(m) for m >= 0.
double block_max_pdf(const BlockMaxModel& model, double m);

// Inverse of block_max_cdf by bracketed bisection, |F(m) - q| resolved to an
// argument tolerance of 1e-10. Requires 0 < q < 1.
double block_max_quantile(const BlockMaxModel& model, double q);

// Continuous conditional CDF of X = W / m for a non-max element given M = m:
// (F_W(m x) - F_W(-m)) / (F_W(m) - F_W(-m)), valid on -1 < x < 1.
double cond_cdf_normalized(const BlockMaxModel& model, double x, double m);

// Full conditional CDF of a normalized element given M = m, including the
// point masses at the endpoints for the given normalization mode. Right-
// continuous: 0 below -1, 1 at and above +1.
double mixed_cdf_normalized(const BlockMaxModel& model, NormalizationMode mode,
                            double x, double m);

// E[X | M = m, X in [lo, hi)] for a standard-normal weight model:
// -(g(m hi) - g(m lo)) / (m (G(m hi) - G(m lo))).
double cond_expect_region_gaussian(double lo, double hi, double m);

// Same expectation for an arbitrary weight model, by adaptive quadrature of
// Int_lo^hi m x p_W(m x) dx / (F_W(m hi) - F_W(m lo)).
double cond_expect_region_general(const BlockMaxModel& model, double lo, double hi,
                                  double m);

// Fraction of the outermost region's conditional mass sitting exactly at
// X = +1, given M = m and the region [left_threshold, +inf):
//   Absolute: 1 / (2 (I-1) Fc(-xi | m) + 1)
//   Signed:   1 / (  (I-1) Fc(-xi | m) + 1)
double edge_mass_fraction(const BlockMaxModel& model, NormalizationMode mode,
                          double left_threshold, double m);

// Marginal CDF of a normalized element with M integrated out (atoms included).
double normalized_marginal_cdf(const BlockMaxModel& model, NormalizationMode mode,
                               double x);

// Inverse of the marginal CDF; returns -1 / +1 inside the endpoint atoms.
double normalized_marginal_quantile(const BlockMaxModel& model, NormalizationMode mode,
                                    double p);

namespace detail {

// Adaptive 7/15-point Gauss-Kronrod integration with an absolute error budget.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-10, int max_depth = 60);

// Bracketed bisection for a nondecreasing-sign function: f(lo) <= 0 <= f(hi).
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double x_tol = 1e-10, int max_iter = 200);

// Upper integration limit covering all but 1e-12 of the block-max mass.
double integration_limit(const BlockMaxModel& model);

// Continuous conditional CDF with a small-m guard: as the denominator
// F_W(m) - F_W(-m) underflows the ratio tends to (1 + x) / 2 for any model
// with a continuous positive density at 0.
double cond_cdf_guarded(const BlockMaxModel& model, double x, double m);

} // namespace detail

} // namespace bof4
