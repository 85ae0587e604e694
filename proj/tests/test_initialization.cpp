#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "embasin/initialization.hpp"
#include "embasin/scalar_kernels.hpp"

using namespace embasin;

namespace {

MixtureModel axis_model(int d, double s, double sigma = 1.0) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
    center(0) = s * sigma;
    return MixtureModel(center, sigma);
}

}  // namespace

TEST_CASE("t_hat on a hand-checked dataset") {
    // Rows (3,0) and (1,2) with sigma = 1, d = 2:
    // mean squared norm is (9 + 5)/2 = 7, so T-hat = 7 - 2 = 5.
    Dataset data;
    data.points.resize(2, 2);
    data.points << 3.0, 0.0, 1.0, 2.0;
    data.labels = {1.0, 1.0};
    CHECK(t_hat(data, 1.0) == 5.0);
    // A null dataset is rejected rather than averaged.
    Dataset empty;
    empty.points.resize(0, 2);
    CHECK_THROWS_AS(t_hat(empty, 1.0), std::invalid_argument);
}

TEST_CASE("t_hat is unbiased across seeds") {
    const MixtureModel model = axis_model(3, 2.0);
    const double truth = model.norm_theta_star() * model.norm_theta_star();
    double sum = 0.0;
    const int reps = 200;
    for (int k = 0; k < reps; ++k) {
        sum += t_hat(sample_dataset(model, 2000, 100 + k), model.sigma);
    }
    const double mean = sum / reps;
    // Var T-hat = 2 sigma^2 (d sigma^2 + 2||theta*||^2)/n per replicate;
    // with n = 2000 and 200 replicates the SE is about 0.0107.
    const double se = std::sqrt(2.0 * (3.0 + 2.0 * truth) / 2000.0 / reps);
    CHECK(std::abs(mean - truth) <= 5.0 * se);
}

TEST_CASE("initializers are deterministic and stream-separated") {
    const MixtureModel model = axis_model(3, 4.0);
    const Eigen::VectorXd a = init_known_norm(model, 5);
    const Eigen::VectorXd b = init_known_norm(model, 5);
    const Eigen::VectorXd c = init_known_norm(model, 6);
    CHECK(a == b);
    CHECK(a != c);
    const Dataset data = sample_dataset(model, 1000, 5);
    const auto [est_a, that_a] = init_estimated_norm(data, model.sigma, 5);
    const auto [est_b, that_b] = init_estimated_norm(data, model.sigma, 5);
    CHECK(est_a == est_b);
    CHECK(that_a == that_b);
    CHECK(that_a == t_hat(data, model.sigma));
    // The two strategies draw from different streams, so equal seeds must
    // not produce proportional vectors.
    CHECK((a.normalized() - est_a.normalized()).norm() > 1e-6);
}

TEST_CASE("initializer scale matches its declared variance") {
    const MixtureModel model = axis_model(4, 3.0);
    double sumsq = 0.0;
    const int reps = 4000;
    for (int k = 0; k < reps; ++k) {
        sumsq += init_known_norm(model, 500 + k).squaredNorm();
    }
    // E||theta_0||^2 = d ||theta*||^2 = 36; SE of the mean of a chi^2_4
    // scaled by 9 is 36 sqrt(2/(4 reps)) ~ 0.4.
    CHECK(std::abs(sumsq / reps - 36.0) <= 2.0);
}

TEST_CASE("initialization probability bounds match their closed forms") {
    // 2 Phi(-1/2) - P(chi^2_4 > 16), with both pieces pinned independently.
    const double known = init_prob_lower_bound(0.5, 4.0, 4);
    CHECK(known == doctest::Approx(0.6140559138008511).epsilon(1e-12));
    CHECK(known == doctest::Approx(2.0 * std_normal_cdf(-0.5) -
                                   chi_square_upper_tail(4, 16.0)).epsilon(1e-15));
    const double estimated = init_prob_lower_bound_estimated(0.5, 4.0, 4, 0.9);
    CHECK(estimated ==
          doctest::Approx(0.9 * (2.0 * std_normal_cdf(-0.5) -
                                 chi_square_upper_tail(4, 8.0))).epsilon(1e-15));
    CHECK(estimated < known);
    CHECK_THROWS_AS(init_prob_lower_bound(0.0, 4.0, 4), std::domain_error);
    CHECK_THROWS_AS(init_prob_lower_bound(0.5, 0.5, 4), std::domain_error);
    CHECK_THROWS_AS(init_prob_lower_bound(0.5, 4.0, 0), std::domain_error);
    CHECK_THROWS_AS(init_prob_lower_bound_estimated(0.5, 4.0, 4, 1.5), std::domain_error);
    CHECK_THROWS_AS(init_prob_lower_bound_estimated(0.5, 4.0, 4, -0.1), std::domain_error);
}

TEST_CASE("t_hat tail bound value and preconditions") {
    // 2 e^{-n eps^2 / (36 d sigma^2 ||theta*||^2)} at n = 1e4, d = 4,
    // sigma = 1, ||theta*|| = 2, eps = 0.5 is 2 e^{-2500/576}.
    const double bound = t_hat_tail_bound(10000, 4, 1.0, 2.0, 0.5);
    CHECK(bound == doctest::Approx(2.0 * std::exp(-2500.0 / 576.0)).epsilon(1e-15));
    CHECK(bound == doctest::Approx(0.026103).epsilon(1e-4));
    // The proposition needs snr >= 1 and eps below 5 d sigma ||theta*||.
    CHECK_THROWS_AS(t_hat_tail_bound(10000, 4, 1.0, 0.5, 0.5), std::domain_error);
    CHECK_THROWS_AS(t_hat_tail_bound(10000, 4, 1.0, 2.0, 41.0), std::domain_error);
    CHECK_THROWS_AS(t_hat_tail_bound(10000, 4, 1.0, 2.0, -0.5), std::domain_error);
    CHECK_THROWS_AS(t_hat_tail_bound(0, 4, 1.0, 2.0, 0.5), std::domain_error);
}

TEST_CASE("log_likelihood matches the direct mixture density") {
    const MixtureModel model = axis_model(2, 1.5);
    const Dataset data = sample_dataset(model, 50, 9);
    Eigen::VectorXd theta(2);
    theta << 1.0, 0.4;
    const double sigma = model.sigma;
    double direct = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        const Eigen::VectorXd y = data.points.row(i).transpose();
        const double d2 = data.dim();
        const double norm_const = std::pow(2.0 * 3.14159265358979323846 * sigma * sigma,
                                           -d2 / 2.0);
        const double comp_plus =
            norm_const * std::exp(-(y - theta).squaredNorm() / (2.0 * sigma * sigma));
        const double comp_minus =
            norm_const * std::exp(-(y + theta).squaredNorm() / (2.0 * sigma * sigma));
        direct += std::log(0.5 * comp_plus + 0.5 * comp_minus);
    }
    direct /= data.n();
    CHECK(std::abs(log_likelihood(theta, data, sigma) - direct) <= 1e-12);
    // Sign symmetry is exact by construction.
    CHECK(log_likelihood(-theta, data, sigma) == log_likelihood(theta, data, sigma));
    Eigen::VectorXd wrong(3);
    wrong.setZero();
    CHECK_THROWS_AS(log_likelihood(wrong, data, sigma), std::invalid_argument);
}

TEST_CASE("multi_start picks the top-likelihood branch deterministically") {
    const MixtureModel model = axis_model(4, 10.0);
    const Dataset data = sample_dataset(model, 5000, 12);
    const MultiStartResult once =
        multi_start(data, model, 5, InitStrategy::kKnownNorm, EmOptions{}, 3);
    const MultiStartResult again =
        multi_start(data, model, 5, InitStrategy::kKnownNorm, EmOptions{}, 3);
    CHECK(once.traces.size() == 5);
    CHECK(once.best_index == again.best_index);
    CHECK(once.best().final_error() == again.best().final_error());
    // The winner maximizes the in-sample likelihood among final iterates.
    const double best_ll =
        log_likelihood(once.best().iterates.back(), data, model.sigma);
    for (const EmTrace& trace : once.traces) {
        CHECK(best_ll >= log_likelihood(trace.iterates.back(), data, model.sigma));
    }
    CHECK_THROWS_AS(multi_start(data, model, 0, InitStrategy::kKnownNorm, EmOptions{}, 3),
                    std::invalid_argument);
}

TEST_CASE("multi_start branches do not depend on how many follow them") {
    // Branch k draws from a seed derived from (seed, k), so trimming m must
    // reproduce the surviving branches bit for bit.
    const MixtureModel model = axis_model(3, 8.0);
    const Dataset data = sample_dataset(model, 2000, 21);
    const MultiStartResult small =
        multi_start(data, model, 2, InitStrategy::kEstimatedNorm, EmOptions{}, 7);
    const MultiStartResult large =
        multi_start(data, model, 4, InitStrategy::kEstimatedNorm, EmOptions{}, 7);
    for (int k = 0; k < 2; ++k) {
        CHECK(small.traces[k].iterates.front() == large.traces[k].iterates.front());
        CHECK(small.traces[k].final_error() == large.traces[k].final_error());
    }
}

TEST_CASE("strategy names are stable") {
    CHECK(to_string(InitStrategy::kKnownNorm) == "known_norm");
    CHECK(to_string(InitStrategy::kEstimatedNorm) == "estimated_norm");
}
