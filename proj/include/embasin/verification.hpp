#pragma once

// Monte Carlo verification layer: estimators for the quantities the theory
// bounds abstractly (sup-deviation over the basin, region probabilities,
// norm-estimator concentration), an exact-law sampler for the norm
// estimator, and the experiment pipeline turning a JSON config into CSV
// artifacts plus named pass/fail assertions.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embasin/gauss_hermite.hpp"
#include "embasin/initialization.hpp"
#include "embasin/mixture_model.hpp"
#include "embasin/rng.hpp"
#include "embasin/sample_em.hpp"

namespace embasin {

// Runs body(0..total-1) on up to `threads` workers. Each index must be a
// pure function writing only to its own output slot, which makes results
// independent of the thread count. threads <= 0 means hardware concurrency.
void parallel_for(long total, int threads, const std::function<void(long)>& body);

struct DeviationEstimate {
    Region region{0.5, 1.0};
    long n = 0;
    int probes = 0;
    std::vector<std::uint64_t> seeds;        // dataset seeds, one per replicate
    std::vector<double> per_seed_s_hat;      // sup over probes, per seed
    double s_hat = 0.0;                      // max over probes and seeds
    std::vector<std::pair<long, double>> per_n_curve;  // (n, s_hat), sorted by n
};

// Lower estimate of sup over the basin of ||M_n(theta) - M(theta)||: for
// each of n_seeds datasets of size n, maximizes the deviation over a probe
// set and takes the max across seeds. probes == 1 degenerates to the
// pointwise deviation at theta* itself; otherwise probes >= 100 is
// required. The probe set is prefix-nested in probes (a fixed stratified
// core followed by a rejection-sampled sequence), so enlarging probes with
// the same seed never decreases the estimate.
DeviationEstimate estimate_sup_deviation(const MixtureModel& model, const Region& region,
                                         long n, int probes, int n_seeds,
                                         const GhRule& rule, std::uint64_t seed,
                                         int threads = 1);

// Hit rate of the sign-symmetrized basin under the chosen initializer,
// paired with the matching theoretical lower bound. The estimated-norm
// strategy needs the sample size n that the norm estimator would see; its
// T-hat values are drawn from the estimator's exact law rather than from
// materialized datasets, and its bound multiplies in the empirical
// probability of the event {|T-hat - ||theta*||^2| < sigma^2/2}.
InitReport empirical_region_probability(const MixtureModel& model, const Region& region,
                                        InitStrategy strategy, long draws, long n,
                                        std::uint64_t seed, int threads = 1);

struct TailCheck {
    double empirical_tail = 0.0;  // fraction with |T-hat - ||theta*||^2| > epsilon
    double bound = 0.0;           // concentration bound, 0 when preconditions fail
    bool precondition_ok = false;
    double mean_t_hat = 0.0;
    double var_t_hat = 0.0;       // unbiased sample variance
};

// Replicates T-hat from its exact law and reports the empirical tail beyond
// epsilon together with the exponential concentration bound. When the
// bound's preconditions fail the empirical side is still computed and the
// bound is flagged instead of thrown.
TailCheck empirical_t_hat_tail(const MixtureModel& model, long n, double epsilon,
                               long replicates, std::uint64_t seed, int threads = 1);

// Marsaglia-Tsang gamma variate with unit scale; any shape > 0.
double sample_gamma(double shape, Philox& gen);
double sample_chi_square(double dof, Philox& gen);

// One draw of T-hat = (1/n) sum(||Y_i||^2 - d sigma^2) without materializing
// the dataset: sum ||Y_i||^2 / sigma^2 follows a noncentral chi-square with
// nd degrees of freedom and noncentrality n s^2, decomposed as
// chi^2_{nd-1} + (Z + s sqrt(n))^2.
double sample_t_hat_exact(const MixtureModel& model, long n, Philox& gen);

// Rejection-samples the known-norm initializer until it lands in the
// symmetrized basin, then flips the sign if needed so the result lies in
// D_{a,r} proper. Attempt k uses seed + k.
Eigen::VectorXd draw_basin_init(const MixtureModel& model, const Region& region,
                                std::uint64_t seed);

struct SweepPoint {
    int m = 0;
    long successes = 0;
    long trials = 0;
    double fraction = 0.0;
};

// Success fraction of multi-start EM (final sign-aligned error at most
// 0.1 ||theta*||) as a function of the number of restarts. Branches are
// shared across the grid: meta-seed k runs max(m_grid) branches once and
// each grid point selects by likelihood among its first m branches.
std::vector<SweepPoint> sweep_success_fractions(const MixtureModel& model, long n,
                                                const std::vector<int>& m_grid,
                                                int meta_seeds, InitStrategy strategy,
                                                const EmOptions& options, std::uint64_t seed,
                                                int threads = 1);

// Invalid configuration; what() lists every offending key.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string& message, std::vector<std::string> keys);
    const std::vector<std::string>& keys() const { return keys_; }

  private:
    std::vector<std::string> keys_;
};

struct ExperimentConfig {
    std::string experiment = "converge";
    int d = 4;
    double s = 10.0;
    double sigma = 1.0;
    double a = 0.5;
    double r = 6.0;
    double kappa1 = 0.75;
    double kappa2 = 0.75;
    long n = 10000;
    std::vector<long> n_grid = {100, 1000, 10000, 100000};
    int probes = 10000;
    int seeds = 20;
    int m = 10;
    double epsilon = 0.5;
    double delta = 0.05;
    int quadrature_order = 61;
    std::string out_dir = "runs";
    std::uint64_t seed = 1;
    int threads = 1;
    std::string format = "csv";
    bool quiet = false;

    // The generating model for this config: theta* = s * sigma * e_1.
    MixtureModel model() const;
    Region region() const { return Region(a, r); }

    nlohmann::json to_json() const;
    // Overlays the keys present in j onto base; unknown keys and type
    // mismatches are collected into a ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& j, const ExperimentConfig& base);
    static ExperimentConfig from_json_file(const std::string& path,
                                           const ExperimentConfig& base);
    // Range checks on every field; throws ConfigError listing offenders.
    void validate() const;
};

// Defaults for one experiment; the global defaults above adjusted where an
// experiment's theory needs a different operating point (contraction and
// stability need gamma < 1 or a nonempty hypothesis window, deviation and
// concentration have their own budget scales).
ExperimentConfig default_config(const std::string& experiment);

const std::vector<std::string>& experiment_names();

struct Assertion {
    std::string name;
    double observed = 0.0;
    double bound = 0.0;
    bool pass = false;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<Assertion> assertions;
    std::vector<std::string> artifact_paths;  // files written, summary.json last
    double runtime_seconds = 0.0;             // console diagnostics only, never serialized

    bool all_pass() const;
    // {experiment, params, assertions: [{name, observed, bound, pass}]}
    std::string summary_json() const;
};

// Validates the config, runs the named experiment, writes its CSV artifacts
// and summary.json under out_dir, and returns the assertion list. Reruns
// with an identical config produce byte-identical artifacts.
ExperimentReport run_experiment(const ExperimentConfig& config);

}  // namespace embasin
