#include "embasin/initialization.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "embasin/rng.hpp"
#include "embasin/scalar_kernels.hpp"

namespace embasin {

std::string to_string(InitStrategy strategy) {
    return strategy == InitStrategy::kKnownNorm ? "known_norm" : "estimated_norm";
}

std::string InitReport::to_json() const {
    nlohmann::json j{{"strategy", embasin::to_string(strategy)},
                     {"draws", draws},
                     {"hits", hits},
                     {"empirical_prob", empirical_prob},
                     {"theoretical_lower_bound", theoretical_lower_bound},
                     {"bound_vacuous", bound_vacuous},
                     {"t_hat", t_hat}};
    return j.dump(2);
}

double t_hat(const Dataset& dataset, double sigma) {
    if (dataset.n() < 1) throw std::invalid_argument("t_hat: empty dataset");
    const double d_sigma2 = dataset.dim() * sigma * sigma;
    double total = 0.0;
    for (int i = 0; i < dataset.n(); ++i) {
        total += dataset.points.row(i).squaredNorm() - d_sigma2;
    }
    return total / dataset.n();
}

Eigen::VectorXd init_known_norm(const MixtureModel& model, std::uint64_t seed) {
    Philox gen(seed, /*stream=*/3);
    Eigen::VectorXd theta(model.dim());
    const double scale = model.norm_theta_star();
    for (int j = 0; j < model.dim(); ++j) theta(j) = scale * gen.normal();
    return theta;
}

std::pair<Eigen::VectorXd, double> init_estimated_norm(const Dataset& dataset,
                                                       double sigma, std::uint64_t seed) {
    const double that = t_hat(dataset, sigma);
    const double variance = std::max(that, 0.0) + 0.5 * sigma * sigma;
    Philox gen(seed, /*stream=*/4);
    Eigen::VectorXd theta(dataset.dim());
    const double scale = std::sqrt(variance);
    for (int j = 0; j < dataset.dim(); ++j) theta(j) = scale * gen.normal();
    return {std::move(theta), that};
}

double init_prob_lower_bound(double a, double r, int d) {
    if (!(a > 0.0 && a < 1.0)) throw std::domain_error("init_prob_lower_bound: a in (0,1)");
    if (!(r >= 1.0)) throw std::domain_error("init_prob_lower_bound: r >= 1");
    if (d < 1) throw std::domain_error("init_prob_lower_bound: d >= 1");
    return 2.0 * std_normal_cdf(-a) - chi_square_upper_tail(d, r * r);
}

double init_prob_lower_bound_estimated(double a, double r, int d, double pE) {
    if (!(pE >= 0.0 && pE <= 1.0)) {
        throw std::domain_error("init_prob_lower_bound_estimated: pE in [0,1]");
    }
    if (!(a > 0.0 && a < 1.0) || !(r >= 1.0) || d < 1) {
        throw std::domain_error("init_prob_lower_bound_estimated: bad region parameters");
    }
    return (2.0 * std_normal_cdf(-a) - chi_square_upper_tail(d, 0.5 * r * r)) * pE;
}

double t_hat_tail_bound(long n, int d, double sigma, double norm_theta, double epsilon) {
    if (n < 1 || d < 1 || !(sigma > 0.0) || !(norm_theta > 0.0)) {
        throw std::domain_error("t_hat_tail_bound: bad model parameters");
    }
    const double s = norm_theta / sigma;
    if (!(s >= 1.0)) {
        throw std::domain_error("t_hat_tail_bound: requires s = ||theta*||/sigma >= 1");
    }
    if (!(epsilon < 5.0 * d * sigma * norm_theta)) {
        throw std::domain_error("t_hat_tail_bound: requires epsilon < 5 d sigma ||theta*||");
    }
    if (!(epsilon >= 0.0)) throw std::domain_error("t_hat_tail_bound: epsilon must be >= 0");
    const double denom = 36.0 * d * sigma * sigma * norm_theta * norm_theta;
    return 2.0 * std::exp(-n * epsilon * epsilon / denom);
}

double log_likelihood(const Eigen::VectorXd& theta, const Dataset& dataset, double sigma) {
    if (theta.size() != dataset.points.cols()) {
        throw std::invalid_argument("log_likelihood: dimension mismatch");
    }
    const long n = dataset.n();
    const int d = dataset.dim();
    const double inv_sigma2 = 1.0 / (sigma * sigma);
    const double log_norm = -0.5 * d * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
    // log( exp(-||y-th||^2/2s^2)/2 + exp(-||y+th||^2/2s^2)/2 )
    //   = -(||y||^2 + ||th||^2)/2s^2 + logcosh(<y,th>/s^2) + log_norm
    const double theta2 = theta.squaredNorm();
    double total = 0.0;
    for (long i = 0; i < n; ++i) {
        const auto y = dataset.points.row(i);
        const double cross = y.dot(theta) * inv_sigma2;
        // logcosh(x) = |x| + log((1+e^{-2|x|})/2), safe for large |x|
        const double logcosh = std::abs(cross) + std::log1p(std::exp(-2.0 * std::abs(cross))) -
                               0.6931471805599453094;
        total += -0.5 * (y.squaredNorm() + theta2) * inv_sigma2 + logcosh + log_norm;
    }
    return total / static_cast<double>(n);
}

MultiStartResult multi_start(const Dataset& dataset, const MixtureModel& model, int m,
                             InitStrategy strategy, const EmOptions& options,
                             std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("multi_start: m must be >= 1");
    MultiStartResult result;
    result.traces.reserve(m);
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int branch = 0; branch < m; ++branch) {
        // one stream per branch so branches are independent and the set of
        // draws does not depend on evaluation order
        const std::uint64_t branch_seed = seed + 1000003ull * (branch + 1);
        Eigen::VectorXd theta0;
        if (strategy == InitStrategy::kKnownNorm) {
            theta0 = init_known_norm(model, branch_seed);
        } else {
            theta0 = init_estimated_norm(dataset, model.sigma, branch_seed).first;
        }
        EmTrace trace = run_em(theta0, dataset, model, options);
        const double ll = log_likelihood(trace.iterates.back(), dataset, model.sigma);
        result.traces.push_back(std::move(trace));
        if (ll > best_ll) {
            best_ll = ll;
            result.best_index = branch;
        }
    }
    return result;
}

}  // namespace embasin
