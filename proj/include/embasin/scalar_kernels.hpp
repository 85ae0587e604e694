#pragma once

// Scalar building blocks: the stretched logistic and its derivatives,
// standard normal cdf/tail, chi-square tails, and the closed-form tail
// bounds that the higher-level checks compare against.

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace embasin {

// Stretched logistic 1/(1+e^{-2t}), evaluated from the side that keeps the
// exponential argument non-positive so it never overflows.
inline double omega(double t) {
    if (!std::isfinite(t)) throw std::domain_error("omega: non-finite input");
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-2.0 * t));
    const double q = std::exp(2.0 * t);
    return q / (1.0 + q);
}

// First derivative via the identity w' = 2w(1-w) = 2q/(1+q)^2, q = e^{-2|t|}.
inline double omega_d1(double t) {
    if (!std::isfinite(t)) throw std::domain_error("omega_d1: non-finite input");
    const double q = std::exp(-2.0 * std::abs(t));
    const double onepq = 1.0 + q;
    return 2.0 * q / (onepq * onepq);
}

// Second derivative via w'' = 2w'(1-2w).
inline double omega_d2(double t) {
    if (!std::isfinite(t)) throw std::domain_error("omega_d2: non-finite input");
    return 2.0 * omega_d1(t) * (1.0 - 2.0 * omega(t));
}

// Third derivative via w''' = 4w'(1-6w+6w^2).
inline double omega_d3(double t) {
    if (!std::isfinite(t)) throw std::domain_error("omega_d3: non-finite input");
    const double w = omega(t);
    return 4.0 * omega_d1(t) * (1.0 - 6.0 * w + 6.0 * w * w);
}

// Standard normal cdf and survival through erfc, accurate in both tails.
inline double std_normal_cdf(double t) {
    if (!std::isfinite(t)) throw std::domain_error("std_normal_cdf: non-finite input");
    return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

inline double std_normal_upper_tail(double t) {
    if (!std::isfinite(t)) throw std::domain_error("std_normal_upper_tail: non-finite input");
    return 0.5 * std::erfc(t / std::numbers::sqrt2);
}

// Survival function of a chi-square with d degrees of freedom, i.e. the
// regularized upper incomplete gamma Q(d/2, x/2). Series for the lower
// function when x/2 < d/2 + 1, Lentz continued fraction for Q otherwise.
double chi_square_upper_tail(int d, double x);

// Chernoff bound (r/sqrt(d))^d e^{-(r^2-d)/2}, valid for r^2 >= d.
double chi_square_chernoff_bound(int d, double r);

}  // namespace embasin
