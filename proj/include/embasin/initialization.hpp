#pragma once

// Random initialization and its guarantees: the norm estimator T-hat, the
// known-norm and estimated-norm Gaussian initializers, the region
// probability lower bounds, the T-hat concentration bound, and multi-start
// orchestration with likelihood-based selection.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "embasin/mixture_model.hpp"
#include "embasin/sample_em.hpp"

namespace embasin {

enum class InitStrategy { kKnownNorm, kEstimatedNorm };

std::string to_string(InitStrategy strategy);

struct InitReport {
    InitStrategy strategy = InitStrategy::kKnownNorm;
    long draws = 0;
    long hits = 0;  // draws landing in D~_{a,r}
    double empirical_prob = 0.0;
    double theoretical_lower_bound = 0.0;
    bool bound_vacuous = false;  // lower bound <= 0 asserts nothing
    double t_hat = 0.0;          // last T-hat seen (estimated-norm only)

    std::string to_json() const;
};

// T-hat = (1/n) sum(||Y_i||^2 - d sigma^2); unbiased for ||theta*||^2 and
// possibly negative.
double t_hat(const Dataset& dataset, double sigma);

// One draw from N(0, ||theta*||^2 I_d).
Eigen::VectorXd init_known_norm(const MixtureModel& model, std::uint64_t seed);

// One draw from N(0, (T-hat_+ + sigma^2/2) I_d) where T-hat_+ = max(T-hat, 0);
// the variance floor sigma^2/2 keeps the initializer non-degenerate.
std::pair<Eigen::VectorXd, double> init_estimated_norm(const Dataset& dataset,
                                                       double sigma, std::uint64_t seed);

// 2 Phi(-a) - P(chi^2_d > r^2); may be <= 0, in which case it is vacuous.
double init_prob_lower_bound(double a, double r, int d);
// [2 Phi(-a) - P(chi^2_d > r^2/2)] * pE for the estimated-norm strategy.
double init_prob_lower_bound_estimated(double a, double r, int d, double pE);

// 2 exp{-n eps^2 / (36 d sigma^2 ||theta*||^2)}. Preconditions from the
// concentration proposition: s >= 1 and eps < 5 d sigma ||theta*||.
double t_hat_tail_bound(long n, int d, double sigma, double norm_theta, double epsilon);

// Average log mixture density log(phi_theta(y)/2 + phi_{-theta}(y)/2) in a
// log-sum-exp form; exactly symmetric under theta -> -theta.
double log_likelihood(const Eigen::VectorXd& theta, const Dataset& dataset, double sigma);

struct MultiStartResult {
    int best_index = 0;
    std::vector<EmTrace> traces;
    const EmTrace& best() const { return traces[best_index]; }
};

// Draws m initializers with the chosen strategy (per-branch RNG streams),
// runs EM from each, and selects the final iterate with the highest
// in-sample log-likelihood; ties break toward the lowest branch index.
MultiStartResult multi_start(const Dataset& dataset, const MixtureModel& model, int m,
                             InitStrategy strategy, const EmOptions& options,
                             std::uint64_t seed);

}  // namespace embasin
