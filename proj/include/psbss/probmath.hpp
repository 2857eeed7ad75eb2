#pragma once

// Scalar probability and numeric primitives shared by the prediction,
// sensing and optimization layers: Gaussian tail function and its inverse,
// binomial tail sums, dB/linear conversions.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace psbss {

/// Complementary distribution function of the standard Gaussian,
/// Q(x) = (1/sqrt(2*pi)) * integral_x^inf exp(-t^2/2) dt.
/// Implemented via erfc to avoid cancellation in the tails.
inline double q_function(double x) {
    if (!std::isfinite(x)) {
        throw std::domain_error("q_function: non-finite argument");
    }
    return 0.5 * std::erfc(x / std::sqrt(2.0));
}

/// Standard Gaussian density.
inline double gaussian_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

/// Inverse of q_function on (0,1). Bisection bracket followed by Newton
/// refinement to 1e-12.
inline double q_inverse(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("q_inverse: argument outside (0,1)");
    }
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (q_function(mid) > p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 50; ++i) {
        const double f = q_function(x) - p;
        const double d = -gaussian_pdf(x);
        const double step = f / d;
        x -= step;
        if (std::abs(step) < 1e-12 * (1.0 + std::abs(x))) break;
    }
    return x;
}

/// Upper binomial tail sum_{i=k}^{n} C(n,i) p^i (1-p)^(n-i).
/// k > n yields 0, k <= 0 yields 1. Stable for n <= 64.
inline double binomial_tail(int n, int k, double p) {
    if (n < 1) throw std::domain_error("binomial_tail: n must be positive");
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("binomial_tail: p outside [0,1]");
    }
    if (k > n) return 0.0;
    if (k <= 0) return 1.0;
    double sum = 0.0;
    double coeff = 1.0;  // C(n,i), exact in double for n <= 64
    for (int i = 0; i <= n; ++i) {
        if (i >= k) {
            sum += coeff * std::pow(p, i) * std::pow(1.0 - p, n - i);
        }
        coeff = coeff * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    return sum < 0.0 ? 0.0 : (sum > 1.0 ? 1.0 : sum);
}

inline double db_to_linear(double x_db) {
    if (!std::isfinite(x_db)) {
        throw std::domain_error("db_to_linear: non-finite argument");
    }
    return std::pow(10.0, x_db / 10.0);
}

inline double linear_to_db(double x) {
    if (!(x > 0.0)) {
        throw std::domain_error("linear_to_db: argument must be positive");
    }
    return 10.0 * std::log10(x);
}

/// dBm to watts (0 dBm = 1 mW).
inline double dbm_to_watt(double x_dbm) { return db_to_linear(x_dbm) * 1e-3; }

}  // namespace psbss
