#include "embasin/scalar_kernels.hpp"

#include <cmath>
#include <limits>

namespace embasin {
namespace {

// Regularized lower incomplete gamma P(a, x) by its power series,
// reliable for x < a + 1.
double gamma_p_series(double a, double x) {
    if (x <= 0.0) return 0.0;
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int k = 0; k < 500; ++k) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by the Lentz continued
// fraction, reliable for x >= a + 1.
double gamma_q_cont_frac(double a, double x) {
    const double tiny = std::numeric_limits<double>::min() / 1e-30;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double chi_square_upper_tail(int d, double x) {
    if (d < 1) throw std::domain_error("chi_square_upper_tail: d must be >= 1");
    if (!(x >= 0.0)) throw std::domain_error("chi_square_upper_tail: x must be >= 0");
    if (x == 0.0) return 1.0;
    const double a = 0.5 * d;
    const double gx = 0.5 * x;
    if (gx < a + 1.0) return 1.0 - gamma_p_series(a, gx);
    return gamma_q_cont_frac(a, gx);
}

double chi_square_chernoff_bound(int d, double r) {
    if (d < 1) throw std::domain_error("chi_square_chernoff_bound: d must be >= 1");
    const double r2 = r * r;
    if (r2 < d) throw std::domain_error("chi_square_chernoff_bound: requires r^2 >= d");
    // (r/sqrt(d))^d e^{-(r^2-d)/2}, assembled in log space to avoid overflow.
    const double log_val = d * (std::log(r) - 0.5 * std::log(static_cast<double>(d)))
                           - 0.5 * (r2 - d);
    return std::exp(log_val);
}

}  // namespace embasin
