#include "embasin/gauss_hermite.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "embasin/scalar_kernels.hpp"

namespace embasin {
namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

// Symmetrize a rule in place: nodes come out of the eigensolver already
// sorted, but the two halves can differ in the last few ulps. Averaging
// mirrored entries makes node_i = -node_{m+1-i} exact, which downstream
// tests for odd-function cancellation rely on.
template <typename Rule>
void symmetrize(Rule& rule) {
    const int m = rule.order;
    for (int i = 0, j = m - 1; i < j; ++i, --j) {
        const double node = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        rule.nodes[j] = node;
        rule.nodes[i] = -node;
        const double weight = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.weights[i] = weight;
        rule.weights[j] = weight;
    }
    if (m % 2 == 1) rule.nodes[m / 2] = 0.0;
}

// Golub-Welsch: eigenvalues of the symmetric tridiagonal Jacobi matrix are
// the nodes; weights are mu0 times the squared first eigenvector entries.
template <typename Rule>
Rule golub_welsch(int order, const std::vector<double>& offdiag, double mu0) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int k = 0; k + 1 < order; ++k) {
        jacobi(k, k + 1) = offdiag[k];
        jacobi(k + 1, k) = offdiag[k];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    Rule rule;
    rule.order = order;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        rule.nodes[i] = solver.eigenvalues()(i);
        const double v0 = solver.eigenvectors()(0, i);
        rule.weights[i] = mu0 * v0 * v0;
    }
    symmetrize(rule);
    return rule;
}

}  // namespace

GhRule gh_rule(int order) {
    if (order < 1 || order > 512) {
        throw std::domain_error("gh_rule: order must be within 1..512");
    }
    if (order == 1) return {1, {0.0}, {kSqrtPi}};
    std::vector<double> offdiag(order - 1);
    for (int k = 1; k < order; ++k) offdiag[k - 1] = std::sqrt(0.5 * k);
    return golub_welsch<GhRule>(order, offdiag, kSqrtPi);
}

GlRule gl_rule(int order) {
    if (order < 1 || order > 512) {
        throw std::domain_error("gl_rule: order must be within 1..512");
    }
    if (order == 1) return {1, {0.0}, {2.0}};
    std::vector<double> offdiag(order - 1);
    for (int k = 1; k < order; ++k) {
        offdiag[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
    }
    return golub_welsch<GlRule>(order, offdiag, 2.0);
}

double gauss_expectation(const std::function<double(double)>& f, double alpha,
                         double beta, const GhRule& rule) {
    if (alpha == 0.0) return f(beta);
    double sum = 0.0;
    for (int i = 0; i < rule.order; ++i) {
        const double t = std::numbers::sqrt2 * rule.nodes[i] * alpha + beta;
        const double ft = f(t);
        if (!std::isfinite(ft)) {
            throw std::domain_error("gauss_expectation: f non-finite at a node");
        }
        sum += rule.weights[i] * ft;
    }
    return sum / kSqrtPi;
}

namespace {

// Correction integrals share one fixed panelization: 24-point
// Gauss-Legendre on panels of width 2 covering [-32, 32]. The integrands
// below are bounded by e^{-2|t|}, so the truncation error is under 2e-27,
// and 0 is a panel edge so the step-remainder's kink never sits inside a
// panel.
constexpr double kPanelT = 32.0;
constexpr double kPanelWidth = 2.0;
constexpr int kPanelGlOrder = 24;

const GlRule& panel_rule() {
    static const GlRule rule = gl_rule(kPanelGlOrder);
    return rule;
}

double normal_density(double t, double beta, double alpha) {
    const double u = (t - beta) / alpha;
    return std::exp(-0.5 * u * u) / (alpha * 2.5066282746310005024);
}

// integral of g(t) N(t; beta, alpha^2) dt over [-32, 32] for localized g.
template <typename G>
double panel_correction(G&& g, double beta, double alpha) {
    if (beta - 40.0 * alpha > kPanelT || beta + 40.0 * alpha < -kPanelT) {
        return 0.0;  // the Gaussian mass over the support is below 1e-300
    }
    const GlRule& gl = panel_rule();
    double total = 0.0;
    const int n_panels = static_cast<int>(2.0 * kPanelT / kPanelWidth);
    for (int p = 0; p < n_panels; ++p) {
        const double lo = -kPanelT + p * kPanelWidth;
        const double mid = lo + 0.5 * kPanelWidth;
        const double rad = 0.5 * kPanelWidth;
        double acc = 0.0;
        for (int i = 0; i < gl.order; ++i) {
            const double t = mid + rad * gl.nodes[i];
            acc += gl.weights[i] * g(t) * normal_density(t, beta, alpha);
        }
        total += rad * acc;
    }
    return total;
}

// omega minus the unit step: odd, bounded by e^{-2|t|}.
double step_remainder(double t) {
    return t >= 0.0 ? omega(t) - 1.0 : omega(t);
}

// Plain-rule fallback threshold: below this alpha the transformed nodes
// stay well inside the integrand's analyticity strip and the default
// order-61 rule is measured at <= 2e-16 absolute error.
constexpr double kPlainAlphaMax = 0.5;

}  // namespace

double expect_omega(double alpha, double beta, const GhRule& rule) {
    alpha = std::abs(alpha);
    if (alpha == 0.0) return omega(beta);
    if (beta > 300.0) return 1.0;
    if (beta < -300.0) return 0.0;
    if (alpha <= kPlainAlphaMax) {
        return gauss_expectation([](double t) { return omega(t); }, alpha, beta, rule);
    }
    return std_normal_cdf(beta / alpha) + panel_correction(step_remainder, beta, alpha);
}

double expect_omega_prime(double alpha, double beta, const GhRule& rule) {
    alpha = std::abs(alpha);
    if (alpha == 0.0) return omega_d1(beta);
    if (std::abs(beta) > 300.0) return 0.0;
    if (alpha <= kPlainAlphaMax) {
        return gauss_expectation([](double t) { return omega_d1(t); }, alpha, beta, rule);
    }
    return panel_correction([](double t) { return omega_d1(t); }, beta, alpha);
}

double expect_omega_second(double alpha, double beta, const GhRule& rule) {
    alpha = std::abs(alpha);
    if (alpha == 0.0) return omega_d2(beta);
    if (std::abs(beta) > 300.0) return 0.0;
    if (alpha <= kPlainAlphaMax) {
        return gauss_expectation([](double t) { return omega_d2(t); }, alpha, beta, rule);
    }
    return panel_correction([](double t) { return omega_d2(t); }, beta, alpha);
}

}  // namespace embasin
