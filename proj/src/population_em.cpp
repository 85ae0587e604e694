#include "embasin/population_em.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "embasin/rng.hpp"
#include "embasin/scalar_kernels.hpp"

namespace embasin {

Eigen::VectorXd pop_em(const Eigen::VectorXd& theta, const MixtureModel& model,
                       const GhRule& rule) {
    if (theta.size() != model.theta_star.size()) {
        throw std::invalid_argument("pop_em: dimension mismatch");
    }
    const double sigma2 = model.sigma * model.sigma;
    const double mu = theta.dot(model.theta_star) / sigma2;
    const double tau = theta.norm() / model.sigma;
    const double e_prime = expect_omega_prime(tau, mu, rule);
    const double e_omega = expect_omega(tau, mu, rule);
    return 2.0 * e_prime * theta + (2.0 * e_omega - 1.0) * model.theta_star;
}

Eigen::VectorXd pop_em_mc_oracle(const Eigen::VectorXd& theta, const MixtureModel& model,
                                 long n_mc, std::uint64_t seed) {
    if (theta.size() != model.theta_star.size()) {
        throw std::invalid_argument("pop_em_mc_oracle: dimension mismatch");
    }
    if (n_mc < 10000) throw std::invalid_argument("pop_em_mc_oracle: n_mc must be >= 1e4");
    const int d = model.dim();
    const double sigma2 = model.sigma * model.sigma;
    Philox gen(seed, /*stream=*/2);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd y(d);
    for (long i = 0; i < n_mc; ++i) {
        const double eta = gen.rademacher();
        for (int j = 0; j < d; ++j) {
            y(j) = eta * model.theta_star(j) + model.sigma * gen.normal();
        }
        acc += y * omega(y.dot(theta) / sigma2);
    }
    return 2.0 * acc / static_cast<double>(n_mc);
}

double gamma_contraction(double s, double r) {
    if (!(r >= 1.0)) throw std::domain_error("gamma_contraction: requires r >= 1");
    if (!(s >= 0.0)) throw std::domain_error("gamma_contraction: requires s >= 0");
    const double sr = s / r;
    return 76.0 * r * r * r * r * std::exp(-sr * sr / 16.0);
}

double lemma_omega_lower_bound(double a, double s, double r) {
    if (!(a > 0.0 && a <= 1.0)) {
        throw std::domain_error("lemma_omega_lower_bound: requires a in (0, 1]");
    }
    if (!(r >= 1.0)) throw std::domain_error("lemma_omega_lower_bound: requires r >= 1");
    if (!(s >= 0.0)) throw std::domain_error("lemma_omega_lower_bound: requires s >= 0");
    const double asr = a * s / r;
    return 1.0 - std::exp(-asr * asr / 5.0);
}

namespace {

std::vector<Eigen::VectorXd> stability_probes(const MixtureModel& model,
                                              const Region& region, int probes,
                                              std::uint64_t seed) {
    // Half stratified coverage of the (inner-product, norm) rectangle, half
    // rejection draws; both kinds include the corner cases that bind.
    const int strat = probes / 2;
    auto pts = sample_region_points(model, region, std::max(1, strat), seed,
                                    ProbeMode::kStratifiedAxis);
    if (probes - strat > 0 && model.dim() <= 64) {
        auto rej = sample_region_points(model, region, probes - strat, seed + 1,
                                        ProbeMode::kUniformRejection);
        pts.insert(pts.end(), rej.begin(), rej.end());
    }
    return pts;
}

}  // namespace

StabilityReport inner_product_stability_check(const MixtureModel& model,
                                              const Region& region, double kappa1,
                                              int probes, const GhRule& rule,
                                              std::uint64_t seed) {
    const double a = region.a;
    const double s = model.snr();
    if (!(kappa1 > a && kappa1 < 1.0)) {
        throw std::domain_error(
            "inner_product_stability_check: requires kappa1 in (a, 1)");
    }
    const double r_cap = a * s / std::sqrt(5.0 * std::log(2.0 / (1.0 - a / kappa1)));
    if (!(region.r <= r_cap)) {
        throw std::domain_error(
            "inner_product_stability_check: requires r <= a s / sqrt(5 log(2/(1-a/kappa1)))");
    }
    StabilityReport report;
    report.inner_bound = (a / kappa1) * model.theta_star.squaredNorm();
    report.min_inner = std::numeric_limits<double>::infinity();
    const auto pts = stability_probes(model, region, probes, seed);
    report.probes = static_cast<int>(pts.size());
    for (const auto& theta : pts) {
        const double inner = pop_em(theta, model, rule).dot(model.theta_star);
        if (inner < report.min_inner) report.min_inner = inner;
    }
    report.pass = report.min_inner >= report.inner_bound - 1e-9;
    return report;
}

StabilityReport norm_stability_check(const MixtureModel& model, const Region& region,
                                     double kappa2, int probes, const GhRule& rule,
                                     std::uint64_t seed) {
    const double a = region.a;
    const double s = model.snr();
    if (!(kappa2 > 0.0 && kappa2 < 1.0)) {
        throw std::domain_error("norm_stability_check: requires kappa2 in (0, 1)");
    }
    if (!(region.r >= 4.0 / kappa2)) {
        throw std::domain_error("norm_stability_check: requires r >= 4/kappa2");
    }
    const double r_cap = a * s / std::sqrt(5.0 * std::log(8.0 / kappa2));
    if (!(region.r <= r_cap)) {
        throw std::domain_error(
            "norm_stability_check: requires r <= a s / sqrt(5 log(8/kappa2))");
    }
    StabilityReport report;
    report.norm_bound = kappa2;
    const double scale = region.r * model.norm_theta_star();
    const auto pts = stability_probes(model, region, probes, seed);
    report.probes = static_cast<int>(pts.size());
    for (const auto& theta : pts) {
        const double ratio = pop_em(theta, model, rule).norm() / scale;
        if (ratio > report.max_norm_ratio) report.max_norm_ratio = ratio;
    }
    report.pass = report.max_norm_ratio <= kappa2 + 1e-9;
    return report;
}

ContractionReport contraction_scan(const MixtureModel& model, const Region& region,
                                   int probes, const GhRule& rule, std::uint64_t seed,
                                   double slack) {
    if (probes < 1) throw std::invalid_argument("contraction_scan: probes must be >= 1");
    ContractionReport report;
    report.region = region;
    report.snr = model.snr();
    report.d = model.dim();
    report.gamma_theoretical = gamma_contraction(model.snr(), region.r);
    report.probes = 0;
    report.quadrature_order = rule.order;
    report.argmax_theta = Eigen::VectorXd::Zero(model.dim());

    const auto pts = stability_probes(model, region, probes, seed);
    for (const auto& theta : pts) {
        const double dist = (theta - model.theta_star).norm();
        if (dist <= 1e-12 * model.norm_theta_star()) continue;  // theta* itself
        const double ratio = (pop_em(theta, model, rule) - model.theta_star).norm() / dist;
        ++report.probes;
        if (ratio > report.max_observed_ratio) {
            report.max_observed_ratio = ratio;
            report.argmax_theta = theta;
        }
    }
    if (report.probes == 0) throw std::runtime_error("contraction_scan: empty probe set");
    report.theorem_silent = report.gamma_theoretical >= 1.0;
    report.pass = report.theorem_silent ||
                  report.max_observed_ratio <= report.gamma_theoretical + slack;
    return report;
}

std::string ContractionReport::to_json() const {
    nlohmann::json j{{"a", region.a},
                     {"r", region.r},
                     {"s", snr},
                     {"d", d},
                     {"gamma", gamma_theoretical},
                     {"max_ratio", max_observed_ratio},
                     {"probes", probes},
                     {"order", quadrature_order},
                     {"pass", pass},
                     {"theorem_silent", theorem_silent}};
    std::vector<double> argmax(argmax_theta.data(), argmax_theta.data() + argmax_theta.size());
    j["argmax_theta"] = argmax;
    return j.dump(2);
}

NormalDifferenceCheck normal_difference_identity_check(double mu0, double sigma0,
                                                       double mu1, double sigma1,
                                                       const GhRule& rule) {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) {
        throw std::domain_error("normal_difference_identity_check: sigmas must be positive");
    }
    NormalDifferenceCheck out;
    out.lhs = expect_omega(sigma1, mu1, rule) - expect_omega(sigma0, mu0, rule);

    static const GlRule lambda_rule = gl_rule(64);
    const double dmu = mu1 - mu0;
    const double dvar = sigma1 * sigma1 - sigma0 * sigma0;
    double rhs = 0.0;
    for (int i = 0; i < lambda_rule.order; ++i) {
        const double lambda = 0.5 * (lambda_rule.nodes[i] + 1.0);
        const double weight = 0.5 * lambda_rule.weights[i];
        const double mu_l = (1.0 - lambda) * mu0 + lambda * mu1;
        const double var_l = (1.0 - lambda) * sigma0 * sigma0 + lambda * sigma1 * sigma1;
        const double sig_l = std::sqrt(var_l);
        rhs += weight * (dmu * expect_omega_prime(sig_l, mu_l, rule) +
                         0.5 * dvar * expect_omega_second(sig_l, mu_l, rule));
    }
    out.rhs = rhs;
    out.gap = std::abs(out.lhs - out.rhs);
    return out;
}

}  // namespace embasin
