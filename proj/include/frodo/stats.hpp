#pragma once

// Scalar statistical utilities: log densities, special functions, and small
// sample-summary helpers shared by the model, diagnostics, and tests.

#include <cmath>
#include <span>
#include <vector>

namespace frodo {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;
// log(sqrt(2/pi)), the half-normal normalizing constant at unit scale.
inline constexpr double kLogHalfNormalUnit = -0.22579135264472743236309761494744;

inline double sq(double x) { return x * x; }

inline double normal_lpdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

// Half-normal with scale `s`, support x >= 0.
inline double half_normal_lpdf(double x, double s) {
  return kLogHalfNormalUnit - std::log(s) - 0.5 * sq(x / s);
}

// Exponential parameterized by rate (mean 1/rate).
inline double exponential_lpdf(double x, double rate) {
  return std::log(rate) - rate * x;
}

// Gamma parameterized by (shape, rate).
inline double gamma_lpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_sum_exp(std::span<const double> x) {
  double m = -HUGE_VAL;
  for (double v : x) m = v > m ? v : m;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// Digamma (derivative of lgamma).  Recurrence pushes the argument above 8,
// then a truncated asymptotic series gives ~1e-13 relative accuracy.
inline double digamma(double x) {
  double result = 0.0;
  while (x < 8.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return result;
}

// Inverse standard-normal CDF, Wichura's PPND16 rational approximations
// (absolute error below 1e-15 across the open unit interval).
inline double inv_Phi(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    return NAN;
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) *
                    r +
                4.5921953931549871457e4) *
                   r +
               1.3731693765509461125e4) *
                  r +
              1.9715909503065514427e3) *
                 r +
             1.3314166789178437745e2) *
                r +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) *
                    r +
                2.1213794301586595867e4) *
                   r +
               5.3941960214247511077e3) *
                  r +
              6.8718700749205790830e2) *
                 r +
             4.2313330701600911252e1) *
                r +
            1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) *
                    r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) *
                    r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) *
                    r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) *
                    r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

// CDF of a half-Student-t with 4 degrees of freedom and scale `s`, x >= 0.
// The full t4 CDF has the closed form F(x) = 1/2 + (3/4)(u - u^3/3) with
// u = x / sqrt(x^2 + 4); the half version folds the negative tail over.
inline double half_t4_cdf(double x, double s) {
  if (x <= 0.0) return 0.0;
  const double t = x / s;
  const double u = t / std::sqrt(t * t + 4.0);
  const double full = 0.5 + 0.75 * (u - u * u * u / 3.0);
  return 2.0 * full - 1.0;
}

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Sample variance with the n-1 denominator.
inline double variance_of(std::span<const double> x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += sq(v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double sd_of(std::span<const double> x) {
  return std::sqrt(variance_of(x));
}

// Quantile by linear interpolation between order statistics (the convention
// used throughout reporting).  `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> sorted_copy(std::span<const double> x);
double quantile_of(std::span<const double> x, double p);

}  // namespace frodo
