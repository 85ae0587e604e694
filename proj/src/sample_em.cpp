#include "embasin/sample_em.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "embasin/scalar_kernels.hpp"

namespace embasin {

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::kMaxIter: return "max_iter";
        case StopReason::kStepTol: return "step_tol";
        case StopReason::kDiverged: return "diverged";
    }
    return "unknown";
}

namespace {

constexpr int kSumBlock = 1024;

void check_dims(const Eigen::VectorXd& theta, const Dataset& dataset, const char* who) {
    if (theta.size() != dataset.points.cols()) {
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
    }
    if (dataset.n() < 1) {
        throw std::invalid_argument(std::string(who) + ": empty dataset");
    }
}

}  // namespace

Eigen::VectorXd sample_em_step(const Eigen::VectorXd& theta, const Dataset& dataset,
                               double sigma) {
    check_dims(theta, dataset, "sample_em_step");
    const long n = dataset.n();
    const int d = dataset.dim();
    const double inv_sigma2 = 1.0 / (sigma * sigma);
    // Fixed-size blocks, each summed locally and then added in block order:
    // the grouping (and therefore the floating-point result) is the same no
    // matter how many threads a caller shards the blocks across.
    Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
    for (long start = 0; start < n; start += kSumBlock) {
        const long stop = std::min(n, start + kSumBlock);
        Eigen::VectorXd block = Eigen::VectorXd::Zero(d);
        for (long i = start; i < stop; ++i) {
            const auto y = dataset.points.row(i);
            const double w = omega(y.dot(theta) * inv_sigma2);
            block += (2.0 * w - 1.0) * y.transpose();
        }
        total += block;
    }
    return total / static_cast<double>(n);
}

double q_objective(const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta,
                   const Dataset& dataset, double sigma) {
    check_dims(theta, dataset, "q_objective");
    if (theta_prime.size() != theta.size()) {
        throw std::invalid_argument("q_objective: dimension mismatch");
    }
    const long n = dataset.n();
    const double inv_sigma2 = 1.0 / (sigma * sigma);
    double total = 0.0;
    for (long start = 0; start < n; start += kSumBlock) {
        const long stop = std::min(n, start + kSumBlock);
        double block = 0.0;
        for (long i = start; i < stop; ++i) {
            const auto y = dataset.points.row(i);
            const double w = omega(y.dot(theta) * inv_sigma2);
            block += -0.5 * theta_prime.squaredNorm() -
                     (1.0 - 2.0 * w) * theta_prime.dot(y) - y.squaredNorm();
        }
        total += block;
    }
    return total / static_cast<double>(n);
}

Eigen::VectorXd q_gradient(const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta,
                           const Dataset& dataset, double sigma) {
    check_dims(theta, dataset, "q_gradient");
    if (theta_prime.size() != theta.size()) {
        throw std::invalid_argument("q_gradient: dimension mismatch");
    }
    // gradient of the per-sample average: -theta' - mean((1 - 2w) y),
    // which is M_n(theta) - theta'.
    return sample_em_step(theta, dataset, sigma) - theta_prime;
}

double sign_aligned_error(const Eigen::VectorXd& theta, const MixtureModel& model) {
    if (theta.size() != model.theta_star.size()) {
        throw std::invalid_argument("sign_aligned_error: dimension mismatch");
    }
    return std::min((theta - model.theta_star).norm(), (theta + model.theta_star).norm());
}

EmTrace run_em(const Eigen::VectorXd& theta0, const Dataset& dataset,
               const MixtureModel& model, const EmOptions& options) {
    if (options.max_iter < 1) throw std::invalid_argument("run_em: max_iter must be >= 1");
    if (!(options.step_tol >= 0.0)) {
        throw std::invalid_argument("run_em: step_tol must be >= 0");
    }
    check_dims(theta0, dataset, "run_em");

    EmTrace trace;
    trace.seed = dataset.seed;
    trace.n = dataset.n();
    trace.model_fingerprint = dataset.model_fingerprint;

    const double step_scale = options.step_tol * model.norm_theta_star();
    Eigen::VectorXd theta = theta0;
    auto record = [&](const Eigen::VectorXd& value) {
        trace.iterates.push_back(value);
        trace.errors.push_back(sign_aligned_error(value, model));
        trace.raw_errors.push_back((value - model.theta_star).norm());
        trace.in_region.push_back(in_D_tilde(value, model, options.region));
    };
    record(theta);

    trace.stop_reason = StopReason::kMaxIter;
    for (int t = 0; t < options.max_iter; ++t) {
        Eigen::VectorXd next = sample_em_step(theta, dataset, model.sigma);
        if (!next.allFinite()) {
            trace.stop_reason = StopReason::kDiverged;
            break;
        }
        const double step = (next - theta).norm();
        record(next);
        theta = std::move(next);
        if (step <= step_scale) {
            trace.stop_reason = StopReason::kStepTol;
            break;
        }
    }
    for (std::size_t k = 0; k + 1 < trace.errors.size(); ++k) {
        trace.ratios.push_back(trace.errors[k] > 0.0
                                   ? trace.errors[k + 1] / trace.errors[k]
                                   : 0.0);
    }
    return trace;
}

double iterate_envelope(int t, double err0, double gamma, double floor) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw std::domain_error("iterate_envelope: requires gamma in [0, 1)");
    }
    if (!(floor >= 0.0)) throw std::domain_error("iterate_envelope: requires floor >= 0");
    return std::pow(gamma, t) * err0 + floor;
}

void write_trace_csv(const EmTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
    const int d = trace.iterates.empty() ? 0 : static_cast<int>(trace.iterates[0].size());
    out << "t";
    for (int j = 0; j < d; ++j) out << ",theta_" << (j + 1);
    out << ",error,ratio,in_region\n";
    for (std::size_t t = 0; t < trace.iterates.size(); ++t) {
        out << t;
        for (int j = 0; j < d; ++j) out << "," << format_double(trace.iterates[t](j));
        out << "," << format_double(trace.errors[t]);
        // the ratio on row t is the step that arrived at iterate t
        out << "," << (t >= 1 ? format_double(trace.ratios[t - 1]) : "");
        out << "," << (trace.in_region[t] ? 1 : 0) << "\n";
    }
}

std::string trace_summary_json(const EmTrace& trace, double gamma_theoretical) {
    nlohmann::json j{{"stop_reason", to_string(trace.stop_reason)},
                     {"final_error", trace.final_error()},
                     {"n", trace.n},
                     {"seed", trace.seed},
                     {"gamma_theoretical", gamma_theoretical}};
    return j.dump(2);
}

}  // namespace embasin
