#pragma once

// Gauss-Hermite quadrature (physicists' convention, weight e^{-z^2}) and
// the one-dimensional Gaussian-expectation engine: everything of the form
// E f(alpha Z + beta), Z ~ N(0,1), flows through here.

#include <functional>
#include <vector>

namespace embasin {

struct GhRule {
    int order = 0;
    std::vector<double> nodes;    // strictly increasing, symmetric about 0
    std::vector<double> weights;  // positive, sum sqrt(pi)
};

// Nodes and weights by eigendecomposition of the Jacobi matrix
// (Golub-Welsch). Valid orders are 1..512; beyond roughly order 380 the
// outermost weights fall below the smallest positive double and flush to
// zero, which the construction tolerates.
GhRule gh_rule(int order);

// Gauss-Legendre companion rule on [-1, 1], built the same way. Used for
// the finite correction integrals below and for the lambda integral in the
// normal-difference identity check.
struct GlRule {
    int order = 0;
    std::vector<double> nodes;
    std::vector<double> weights;  // positive, sum 2
};
GlRule gl_rule(int order);

// The plain quadrature estimate sum_i (w_i/sqrt(pi)) f(sqrt(2) x_i alpha + beta).
// Exact for polynomial f up to degree 2*order-1; for sigmoid-like f it is
// accurate only while alpha stays small or the transition point beta/alpha
// sits far out in the Gaussian tail (see expect_omega below for the
// production evaluator that is accurate everywhere).
double gauss_expectation(const std::function<double(double)>& f, double alpha,
                         double beta, const GhRule& rule);

// High-accuracy expectations of the logistic kernel and its derivatives.
//
// The integrand omega(alpha z + beta) has poles at alpha z + beta = i pi/2,
// so the plain rule cannot reach 1e-10 accuracy in the transition regime
// (alpha of a few units, |beta| comparable to alpha). These evaluators
// instead split off the exact Gaussian-step part Phi(beta/alpha) and
// integrate the remainder, which is confined to |t| <~ 30 by its e^{-2|t|}
// envelope, with fixed Gauss-Legendre panels against the N(beta, alpha^2)
// density. Measured accuracy over alpha in [0, 50], beta in [-100, 100]:
// better than 1e-13 absolute. For alpha <= 0.5 the plain rule is already
// exact at machine precision and is used directly.
//
// Per the quadrature module's pinned short-circuit, |beta| > 300 returns
// the saturated limit (0/1 for omega, 0 for the derivatives).
double expect_omega(double alpha, double beta, const GhRule& rule);
double expect_omega_prime(double alpha, double beta, const GhRule& rule);
double expect_omega_second(double alpha, double beta, const GhRule& rule);

}  // namespace embasin
