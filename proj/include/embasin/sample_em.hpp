#pragma once

// The finite-sample EM operator, the iterate runner with error tracking,
// the per-sample objective whose argmax the operator is, and the
// theoretical per-iteration error envelope.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "embasin/mixture_model.hpp"

namespace embasin {

enum class StopReason { kMaxIter, kStepTol, kDiverged };

std::string to_string(StopReason reason);

struct EmTrace {
    std::vector<Eigen::VectorXd> iterates;  // theta_0 .. theta_T
    std::vector<double> errors;             // sign-aligned error per iterate
    std::vector<double> raw_errors;         // plain ||theta - theta*|| for comparison
    std::vector<double> ratios;             // errors[k+1]/errors[k]
    std::vector<bool> in_region;            // membership in D~_{a,r} at each iterate
    StopReason stop_reason = StopReason::kMaxIter;
    std::uint64_t seed = 0;
    long n = 0;
    std::string model_fingerprint;

    double final_error() const { return errors.empty() ? 0.0 : errors.back(); }
};

struct EmOptions {
    int max_iter = 500;
    double step_tol = 1e-10;  // relative to ||theta*||
    Region region{0.5, 6.0};  // region tracked in the trace
};

// M_n(theta) = (2/n) sum y_i w(<y_i, theta>/sigma^2) - (1/n) sum y_i.
// One pass over the data; blockwise pairwise accumulation keeps the result
// independent of how a parallel caller splits the data.
Eigen::VectorXd sample_em_step(const Eigen::VectorXd& theta, const Dataset& dataset,
                               double sigma);

// Per-sample average of the surrogate objective
//   -||theta'||^2/2 - (1 - 2 w(<theta, y>/sigma^2)) <theta', y> - ||y||^2
// and its theta'-gradient. sample_em_step is the exact argmax.
double q_objective(const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta,
                   const Dataset& dataset, double sigma);
Eigen::VectorXd q_gradient(const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta,
                           const Dataset& dataset, double sigma);

// min(||theta - theta*||, ||theta + theta*||): the error metric under the
// model's sign non-identifiability.
double sign_aligned_error(const Eigen::VectorXd& theta, const MixtureModel& model);

// Iterates theta <- M_n(theta) until the step shrinks below
// step_tol * ||theta*|| or max_iter is reached, recording errors and
// region membership at every iterate. theta0 = 0 is accepted (it is an
// exact fixed point) and simply flagged out-of-region.
EmTrace run_em(const Eigen::VectorXd& theta0, const Dataset& dataset,
               const MixtureModel& model, const EmOptions& options);

// gamma^t err0 + floor: the geometric per-iteration error envelope with the
// additive noise floor supplied by the caller.
double iterate_envelope(int t, double err0, double gamma, double floor);

// Trace CSV (t, theta_1..theta_d, error, ratio, in_region) and a JSON
// summary {stop_reason, final_error, n, seed, gamma_theoretical}.
void write_trace_csv(const EmTrace& trace, const std::string& path);
std::string trace_summary_json(const EmTrace& trace, double gamma_theoretical);

}  // namespace embasin
