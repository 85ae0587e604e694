#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "embasin/population_em.hpp"
#include "embasin/scalar_kernels.hpp"
#include "embasin/verification.hpp"

using namespace embasin;

namespace {

MixtureModel axis_model(int d, double s, double sigma = 1.0) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
    center(0) = s * sigma;
    return MixtureModel(center, sigma);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("parallel_for covers every index regardless of thread count") {
    const long total = 1000;
    std::vector<long> serial(total, 0), threaded(total, 0);
    parallel_for(total, 1, [&](long i) { serial[i] = i * i; });
    parallel_for(total, 4, [&](long i) { threaded[i] = i * i; });
    CHECK(serial == threaded);
    // More workers than work and zero work are both fine.
    std::atomic<long> count{0};
    parallel_for(3, 16, [&](long) { ++count; });
    CHECK(count.load() == 3);
    parallel_for(0, 4, [&](long) { ++count; });
    CHECK(count.load() == 3);
}

TEST_CASE("parallel_for propagates the first worker exception") {
    CHECK_THROWS_AS(parallel_for(100, 4,
                                 [](long i) {
                                     if (i == 37) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("gamma and chi-square samplers hit their moments") {
    Philox gen(5, 0);
    const long n = 200000;
    for (double shape : {0.5, 2.5}) {
        double sum = 0.0, sumsq = 0.0;
        for (long i = 0; i < n; ++i) {
            const double x = sample_gamma(shape, gen);
            CHECK(x > 0.0);
            sum += x;
            sumsq += x * x;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        // Gamma(k) has mean k, variance k; gates sit around five SEs.
        CHECK(std::abs(mean - shape) <= 0.03);
        CHECK(std::abs(var - shape) <= 0.08);
    }
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < n; ++i) {
        const double x = sample_chi_square(5.0, gen);
        sum += x;
        sumsq += x * x;
    }
    CHECK(std::abs(sum / n - 5.0) <= 0.05);
    CHECK(std::abs(sumsq / n - std::pow(sum / n, 2) - 10.0) <= 0.35);
    CHECK_THROWS_AS(sample_gamma(0.0, gen), std::domain_error);
    CHECK_THROWS_AS(sample_chi_square(-1.0, gen), std::domain_error);
}

TEST_CASE("exact-law T-hat sampler matches theory and the dataset estimator") {
    const MixtureModel model = axis_model(3, 2.0);
    const long n = 500;
    const double truth = 4.0;
    const double theory_var = 2.0 * (3.0 + 2.0 * truth) / n;  // sigma = 1

    Philox gen(9, 0);
    const long reps = 50000;
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < reps; ++i) {
        const double v = sample_t_hat_exact(model, n, gen);
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / reps;
    const double var = sumsq / reps - mean * mean;
    CHECK(std::abs(mean - truth) <= 5.0 * std::sqrt(theory_var / reps));
    CHECK(std::abs(var / theory_var - 1.0) <= 0.05);

    // The dataset-materializing estimator follows the same law.
    double data_sum = 0.0;
    const int data_reps = 300;
    for (int k = 0; k < data_reps; ++k) {
        data_sum += t_hat(sample_dataset(model, n, 3000 + k), model.sigma);
    }
    CHECK(std::abs(data_sum / data_reps - truth) <=
          5.0 * std::sqrt(theory_var / data_reps));

    Philox replay(9, 0);
    CHECK(sample_t_hat_exact(model, n, replay) !=
          sample_t_hat_exact(model, n, replay));
    CHECK_THROWS_AS(sample_t_hat_exact(model, 0, gen), std::invalid_argument);
}

TEST_CASE("sup-deviation estimator validates and degenerates to pointwise") {
    const MixtureModel model = axis_model(2, 5.0);
    const Region region(0.5, 4.0);
    const GhRule rule = gh_rule(61);
    CHECK_THROWS_AS(estimate_sup_deviation(model, region, 1000, 50, 3, rule, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_sup_deviation(model, region, 1000, 100, 0, rule, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_sup_deviation(model, region, 0, 1, 3, rule, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_sup_deviation(axis_model(17, 5.0), Region(0.5, 4.0), 1000,
                                           100, 3, rule, 1),
                    std::invalid_argument);

    const DeviationEstimate pointwise =
        estimate_sup_deviation(model, region, 1000, 1, 5, rule, 11);
    CHECK(pointwise.probes == 1);
    CHECK(pointwise.per_seed_s_hat.size() == 5);
    CHECK(pointwise.seeds.size() == 5);
    double max_seen = 0.0;
    for (double v : pointwise.per_seed_s_hat) {
        CHECK(v >= 0.0);
        max_seen = std::max(max_seen, v);
    }
    CHECK(pointwise.s_hat == max_seen);
    REQUIRE(pointwise.per_n_curve.size() == 1);
    CHECK(pointwise.per_n_curve[0].first == 1000);
    CHECK(pointwise.per_n_curve[0].second == pointwise.s_hat);
}

TEST_CASE("sup-deviation estimate is deterministic and monotone in probes") {
    const MixtureModel model = axis_model(2, 5.0);
    const Region region(0.5, 4.0);
    const GhRule rule = gh_rule(61);
    const DeviationEstimate base =
        estimate_sup_deviation(model, region, 500, 100, 3, rule, 11);
    const DeviationEstimate again =
        estimate_sup_deviation(model, region, 500, 100, 3, rule, 11);
    CHECK(base.s_hat == again.s_hat);
    CHECK(base.per_seed_s_hat == again.per_seed_s_hat);
    // The probe sequence is prefix-nested, so more probes can only raise
    // the supremum estimate.
    const DeviationEstimate wider =
        estimate_sup_deviation(model, region, 500, 200, 3, rule, 11);
    CHECK(wider.s_hat >= base.s_hat);
    // The sup over probes dominates the pointwise deviation at theta*.
    const DeviationEstimate at_star =
        estimate_sup_deviation(model, region, 500, 1, 3, rule, 11);
    CHECK(base.s_hat >= at_star.s_hat);
    // Thread count must not change the result.
    const DeviationEstimate threaded =
        estimate_sup_deviation(model, region, 500, 100, 3, rule, 11, 3);
    CHECK(threaded.s_hat == base.s_hat);
    CHECK(threaded.per_seed_s_hat == base.per_seed_s_hat);
}

TEST_CASE("region probability matches the d = 1 closed form") {
    // In d = 1 the known-norm draw is ||theta*|| Z, and the symmetrized
    // basin becomes {a <= |Z| <= r}, whose probability is 2(Phi(r)-Phi(a)).
    const MixtureModel model = axis_model(1, 3.0);
    const Region region(0.5, 2.0);
    const InitReport report = empirical_region_probability(
        model, region, InitStrategy::kKnownNorm, 20000, 1000, 4);
    const double exact = 2.0 * (std_normal_cdf(2.0) - std_normal_cdf(0.5));
    CHECK(std::abs(report.empirical_prob - exact) <= 0.018);  // five binomial SEs
    CHECK(report.draws == 20000);
    CHECK(report.hits == static_cast<long>(report.empirical_prob * 20000 + 0.5));
}

TEST_CASE("region probability beats its lower bound for both strategies") {
    const MixtureModel model = axis_model(2, 10.0);
    const Region region(0.5, 4.0);
    const InitReport known = empirical_region_probability(
        model, region, InitStrategy::kKnownNorm, 20000, 10000, 4);
    CHECK(known.theoretical_lower_bound ==
          doctest::Approx(init_prob_lower_bound(0.5, 4.0, 2)).epsilon(1e-15));
    CHECK(!known.bound_vacuous);
    CHECK(known.empirical_prob >= known.theoretical_lower_bound - 0.02);

    const InitReport estimated = empirical_region_probability(
        model, region, InitStrategy::kEstimatedNorm, 20000, 10000, 4);
    CHECK(estimated.hits > 0);
    CHECK(estimated.empirical_prob >= estimated.theoretical_lower_bound - 0.02);
    CHECK(estimated.t_hat != 0.0);

    // Determinism and thread invariance.
    const InitReport replay = empirical_region_probability(
        model, region, InitStrategy::kEstimatedNorm, 20000, 10000, 4);
    const InitReport threaded = empirical_region_probability(
        model, region, InitStrategy::kEstimatedNorm, 20000, 10000, 4, 3);
    CHECK(replay.hits == estimated.hits);
    CHECK(threaded.hits == estimated.hits);
    CHECK_THROWS_AS(empirical_region_probability(model, region,
                                                 InitStrategy::kKnownNorm, 500, 1000, 4),
                    std::invalid_argument);
}

TEST_CASE("T-hat tail check flags and bounds") {
    const MixtureModel model = axis_model(4, 2.0);
    const TailCheck check = empirical_t_hat_tail(model, 2000, 0.5, 20000, 6);
    CHECK(check.precondition_ok);
    CHECK(check.bound == doctest::Approx(t_hat_tail_bound(2000, 4, 1.0, 2.0, 0.5))
                             .epsilon(1e-15));
    CHECK(check.empirical_tail <= check.bound);
    CHECK(std::abs(check.mean_t_hat - 4.0) <= 0.01);
    // epsilon = 0: every draw exceeds the threshold and the bound is the
    // trivial 2, still formally valid.
    const TailCheck zero = empirical_t_hat_tail(model, 2000, 0.0, 2000, 6);
    CHECK(zero.empirical_tail == 1.0);
    CHECK(zero.bound == 2.0);
    // Below snr 1 the proposition does not apply; the empirical side still
    // reports, with the bound zeroed and flagged.
    const TailCheck weak = empirical_t_hat_tail(axis_model(4, 0.5), 2000, 0.5, 2000, 6);
    CHECK(!weak.precondition_ok);
    CHECK(weak.bound == 0.0);
    CHECK(weak.empirical_tail >= 0.0);
    CHECK_THROWS_AS(empirical_t_hat_tail(model, 2000, -0.5, 2000, 6), std::domain_error);
    CHECK_THROWS_AS(empirical_t_hat_tail(model, 2000, 0.5, 500, 6), std::invalid_argument);
}

TEST_CASE("draw_basin_init lands in the basin proper") {
    const MixtureModel model = axis_model(4, 10.0);
    const Region region(0.5, 6.0);
    const Eigen::VectorXd theta0 = draw_basin_init(model, region, 42);
    CHECK(in_D(theta0, model, region));
    CHECK(draw_basin_init(model, region, 42) == theta0);
    CHECK(draw_basin_init(model, region, 43) != theta0);
}

TEST_CASE("sweep success fractions have coherent structure") {
    const MixtureModel model = axis_model(2, 10.0);
    const std::vector<int> grid = {3, 1, 3};  // unsorted with repeats on purpose
    const auto points = sweep_success_fractions(model, 2000, grid, 10,
                                                InitStrategy::kKnownNorm, EmOptions{}, 5);
    REQUIRE(points.size() == 2);  // deduplicated
    CHECK(points[0].m == 1);
    CHECK(points[1].m == 3);
    for (const SweepPoint& p : points) {
        CHECK(p.trials == 10);
        CHECK(p.successes >= 0);
        CHECK(p.successes <= p.trials);
        CHECK(p.fraction == static_cast<double>(p.successes) / p.trials);
    }
    // Deterministic, and thread count is irrelevant to the values.
    const auto again = sweep_success_fractions(model, 2000, grid, 10,
                                               InitStrategy::kKnownNorm, EmOptions{}, 5);
    const auto threaded = sweep_success_fractions(model, 2000, grid, 10,
                                                  InitStrategy::kKnownNorm, EmOptions{}, 5, 3);
    for (size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].successes == again[i].successes);
        CHECK(points[i].successes == threaded[i].successes);
    }
    CHECK_THROWS_AS(sweep_success_fractions(model, 2000, {}, 10,
                                            InitStrategy::kKnownNorm, EmOptions{}, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(sweep_success_fractions(model, 2000, {0, 2}, 10,
                                            InitStrategy::kKnownNorm, EmOptions{}, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(sweep_success_fractions(model, 2000, {1}, 0,
                                            InitStrategy::kKnownNorm, EmOptions{}, 5),
                    std::invalid_argument);
}

TEST_CASE("config JSON overlay accepts known keys and rejects the rest") {
    const ExperimentConfig base;
    const ExperimentConfig overlaid =
        ExperimentConfig::from_json(nlohmann::json{{"d", 8}, {"s", 2.5}}, base);
    CHECK(overlaid.d == 8);
    CHECK(overlaid.s == 2.5);
    CHECK(overlaid.n == base.n);
    CHECK(overlaid.out_dir == base.out_dir);

    try {
        ExperimentConfig::from_json(nlohmann::json{{"dd", 3}, {"d", "four"}}, base);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.keys().size() == 2);
        CHECK(e.keys()[0] == "d");
        CHECK(e.keys()[1] == "dd");
        CHECK(std::string(e.what()).find("d dd") != std::string::npos);
    }
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"seed", -1}}, base),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"n", 2.5}}, base),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::array(), base),
                    ConfigError);
    // Integral doubles pass through integer fields; n_grid must be all
    // integers.
    const ExperimentConfig grid = ExperimentConfig::from_json(
        nlohmann::json{{"n_grid", {100, 1000}}}, base);
    REQUIRE(grid.n_grid.size() == 2);
    CHECK(grid.n_grid[1] == 1000);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json(nlohmann::json{{"n_grid", {100, "x"}}}, base),
        ConfigError);
}

TEST_CASE("config validation lists every offending field") {
    ExperimentConfig bad;
    bad.experiment = "bogus";
    bad.d = 0;
    bad.a = 1.0;
    bad.r = 0.5;
    bad.format = "xml";
    try {
        bad.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const auto& keys = e.keys();
        for (const char* expected : {"experiment", "d", "a", "r", "format"}) {
            CHECK(std::find(keys.begin(), keys.end(), expected) != keys.end());
        }
    }
    ExperimentConfig grid_bad;
    grid_bad.n_grid = {1000, 1000};
    CHECK_THROWS_AS(grid_bad.validate(), ConfigError);
    ExperimentConfig fine;
    CHECK_NOTHROW(fine.validate());
}

TEST_CASE("config serialization round trips") {
    ExperimentConfig cfg = default_config("deviation");
    cfg.seed = 77;
    cfg.out_dir = "elsewhere";
    const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json(), ExperimentConfig{});
    CHECK(back.to_json().dump() == cfg.to_json().dump());
    CHECK(back.experiment == "deviation");
    CHECK(back.seed == 77);
}

TEST_CASE("per-experiment defaults sit where their theory applies") {
    CHECK(default_config("contraction").s == 100.0);
    CHECK(default_config("contraction").d == 2);
    CHECK(default_config("stability").s == 200.0);
    CHECK(default_config("deviation").s == 5.0);
    CHECK(default_config("concentration").s == 2.0);
    CHECK(default_config("converge").s == 10.0);
    CHECK_THROWS_AS(default_config("nope"), ConfigError);
    CHECK(experiment_names().size() == 8);
    for (const std::string& name : experiment_names()) {
        CHECK_NOTHROW(default_config(name).validate());
    }
    const ExperimentConfig cfg = default_config("converge");
    const MixtureModel model = cfg.model();
    CHECK(model.dim() == 4);
    CHECK(model.theta_star(0) == 10.0);
    CHECK(model.theta_star(1) == 0.0);
}

TEST_CASE("config file loading reports unreadable and invalid input") {
    const ExperimentConfig base;
    CHECK_THROWS_AS(ExperimentConfig::from_json_file("/nonexistent/cfg.json", base),
                    ConfigError);
    const auto dir = std::filesystem::temp_directory_path() / "embasin_cfg";
    std::filesystem::create_directories(dir);
    const std::string bad_path = (dir / "bad.json").string();
    std::ofstream(bad_path) << "{not json";
    CHECK_THROWS_AS(ExperimentConfig::from_json_file(bad_path, base), ConfigError);
    const std::string good_path = (dir / "good.json").string();
    std::ofstream(good_path) << "{\"d\": 6}";
    CHECK(ExperimentConfig::from_json_file(good_path, base).d == 6);
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment produces a passing self-test with clean summary") {
    const auto dir = std::filesystem::temp_directory_path() / "embasin_selftest_run";
    std::filesystem::remove_all(dir);
    ExperimentConfig cfg = default_config("kernels-selftest");
    cfg.out_dir = dir.string();
    const ExperimentReport report = run_experiment(cfg);
    CHECK(report.all_pass());
    CHECK(report.runtime_seconds > 0.0);
    REQUIRE(!report.artifact_paths.empty());
    for (const std::string& path : report.artifact_paths) {
        CHECK(std::filesystem::exists(path));
    }
    const std::string summary_path = report.artifact_paths.back();
    CHECK(summary_path.find("summary.json") != std::string::npos);
    const auto summary = nlohmann::json::parse(slurp(summary_path));
    CHECK(summary.at("experiment") == "kernels-selftest");
    CHECK(summary.at("params").at("d") == cfg.d);
    REQUIRE(summary.at("assertions").is_array());
    CHECK(!summary.at("assertions").empty());
    for (const auto& entry : summary.at("assertions")) {
        CHECK(entry.contains("name"));
        CHECK(entry.contains("observed"));
        CHECK(entry.contains("bound"));
        CHECK(entry.at("pass").is_boolean());
    }
    // Wall-clock time never enters the serialized summary; reruns must be
    // byte-identical.
    CHECK(!summary.contains("runtime_seconds"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment reruns are byte-identical") {
    const auto dir = std::filesystem::temp_directory_path() / "embasin_rerun";
    std::filesystem::remove_all(dir);
    ExperimentConfig cfg = default_config("converge");
    cfg.n = 500;
    cfg.out_dir = dir.string();
    const ExperimentReport first = run_experiment(cfg);
    std::vector<std::string> before;
    for (const std::string& path : first.artifact_paths) before.push_back(slurp(path));
    const ExperimentReport second = run_experiment(cfg);
    REQUIRE(second.artifact_paths == first.artifact_paths);
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(slurp(first.artifact_paths[i]) == before[i]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment rejects invalid configs up front") {
    ExperimentConfig cfg = default_config("converge");
    cfg.d = 0;
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}
