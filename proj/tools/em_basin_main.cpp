#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "embasin/mixture_model.hpp"
#include "embasin/verification.hpp"

namespace {

// Mutable flag holders for one subcommand. Values start at the experiment's
// defaults so the help text shows what actually runs.
struct FlagHolder {
    std::string config_path;
    int d = 0;
    double s = 0.0;
    double sigma = 0.0;
    double a = 0.0;
    double r = 0.0;
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    long n = 0;
    std::vector<long> n_grid;
    int probes = 0;
    int seeds = 0;
    int m = 0;
    double epsilon = 0.0;
    double delta = 0.0;
    int quadrature_order = 0;
    std::string out_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string format;
    bool quiet = false;
};

void add_experiment_subcommand(CLI::App& app, const std::string& name, const char* blurb,
                               std::optional<embasin::ExperimentConfig>& chosen) {
    auto* sub = app.add_subcommand(name, blurb);
    auto holder = std::make_shared<FlagHolder>();
    const embasin::ExperimentConfig defaults = embasin::default_config(name);
    holder->d = defaults.d;
    holder->s = defaults.s;
    holder->sigma = defaults.sigma;
    holder->a = defaults.a;
    holder->r = defaults.r;
    holder->kappa1 = defaults.kappa1;
    holder->kappa2 = defaults.kappa2;
    holder->n = defaults.n;
    holder->n_grid = defaults.n_grid;
    holder->probes = defaults.probes;
    holder->seeds = defaults.seeds;
    holder->m = defaults.m;
    holder->epsilon = defaults.epsilon;
    holder->delta = defaults.delta;
    holder->quadrature_order = defaults.quadrature_order;
    holder->out_dir = defaults.out_dir;
    holder->seed = defaults.seed;
    holder->threads = defaults.threads;
    holder->format = defaults.format;

    sub->add_option("--config", holder->config_path,
                    "JSON config file; explicit flags override its values");
    sub->add_option("--d", holder->d, "ambient dimension")->capture_default_str();
    sub->add_option("--s", holder->s, "signal-to-noise ratio ||theta*|| / sigma")
        ->capture_default_str();
    sub->add_option("--sigma", holder->sigma, "component noise scale")->capture_default_str();
    sub->add_option("--a", holder->a, "half-space alignment parameter in (0, 1)")
        ->capture_default_str();
    sub->add_option("--r", holder->r, "ball radius multiple of ||theta*||, at least 1")
        ->capture_default_str();
    sub->add_option("--kappa1", holder->kappa1, "inner-product stability level")
        ->capture_default_str();
    sub->add_option("--kappa2", holder->kappa2, "norm stability level")->capture_default_str();
    sub->add_option("--n", holder->n, "sample size")->capture_default_str();
    sub->add_option("--n-grid", holder->n_grid,
                    "comma-separated sample sizes for the deviation sweep")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--probes", holder->probes,
                    "region probe count, or Monte Carlo draws for sampling experiments")
        ->capture_default_str();
    sub->add_option("--seeds", holder->seeds, "number of replicate seeds")
        ->capture_default_str();
    sub->add_option("--m", holder->m, "largest multi-start restart count")
        ->capture_default_str();
    sub->add_option("--epsilon", holder->epsilon, "tail deviation threshold")
        ->capture_default_str();
    sub->add_option("--delta", holder->delta, "confidence budget")->capture_default_str();
    sub->add_option("--quadrature-order", holder->quadrature_order,
                    "Gauss-Hermite rule order")
        ->capture_default_str();
    sub->add_option("--out", holder->out_dir, "output directory for artifacts")
        ->capture_default_str();
    sub->add_option("--seed", holder->seed, "base random seed")->capture_default_str();
    sub->add_option("--threads", holder->threads,
                    "worker thread cap, 0 means hardware concurrency; results do not "
                    "depend on this")
        ->capture_default_str();
    sub->add_option("--format", holder->format, "trace artifact format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    sub->add_flag("--quiet", holder->quiet, "suppress per-assertion output");

    sub->callback([&chosen, sub, holder, name]() {
        embasin::ExperimentConfig cfg = embasin::default_config(name);
        if (sub->count("--config") > 0) {
            cfg = embasin::ExperimentConfig::from_json_file(holder->config_path, cfg);
        }
        cfg.experiment = name;
        if (sub->count("--d") > 0) cfg.d = holder->d;
        if (sub->count("--s") > 0) cfg.s = holder->s;
        if (sub->count("--sigma") > 0) cfg.sigma = holder->sigma;
        if (sub->count("--a") > 0) cfg.a = holder->a;
        if (sub->count("--r") > 0) cfg.r = holder->r;
        if (sub->count("--kappa1") > 0) cfg.kappa1 = holder->kappa1;
        if (sub->count("--kappa2") > 0) cfg.kappa2 = holder->kappa2;
        if (sub->count("--n") > 0) cfg.n = holder->n;
        if (sub->count("--n-grid") > 0) cfg.n_grid = holder->n_grid;
        if (sub->count("--probes") > 0) cfg.probes = holder->probes;
        if (sub->count("--seeds") > 0) cfg.seeds = holder->seeds;
        if (sub->count("--m") > 0) cfg.m = holder->m;
        if (sub->count("--epsilon") > 0) cfg.epsilon = holder->epsilon;
        if (sub->count("--delta") > 0) cfg.delta = holder->delta;
        if (sub->count("--quadrature-order") > 0) {
            cfg.quadrature_order = holder->quadrature_order;
        }
        if (sub->count("--out") > 0) cfg.out_dir = holder->out_dir;
        if (sub->count("--seed") > 0) cfg.seed = holder->seed;
        if (sub->count("--threads") > 0) cfg.threads = holder->threads;
        if (sub->count("--format") > 0) cfg.format = holder->format;
        if (sub->count("--quiet") > 0) cfg.quiet = true;
        chosen = cfg;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical verification suite for symmetric two-component Gaussian "
                 "mixture EM"};
    app.require_subcommand(0, 1);
    std::optional<embasin::ExperimentConfig> chosen;

    add_experiment_subcommand(app, "converge",
                              "Run EM on one sampled dataset from a basin initializer and "
                              "check geometric error decay",
                              chosen);
    add_experiment_subcommand(app, "contraction",
                              "Scan the population EM map over region probes against the "
                              "contraction factor",
                              chosen);
    add_experiment_subcommand(app, "stability",
                              "Check that the population map keeps iterates inside the "
                              "trust region",
                              chosen);
    add_experiment_subcommand(app, "init-prob",
                              "Estimate the probability that a random initializer lands "
                              "in the basin",
                              chosen);
    add_experiment_subcommand(app, "concentration",
                              "Check the mean, variance, and tail bound of the squared-norm "
                              "statistic",
                              chosen);
    add_experiment_subcommand(app, "deviation",
                              "Estimate sup and pointwise deviations between the sample "
                              "and population maps across sample sizes",
                              chosen);
    add_experiment_subcommand(app, "kernels-selftest",
                              "Verify scalar kernels, tail bounds, and quadrature rules "
                              "against internal oracles",
                              chosen);
    add_experiment_subcommand(app, "sweep",
                              "Measure multi-start success fractions as the restart count "
                              "grows",
                              chosen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        // Config loading runs inside the subcommand callback, so bad files
        // and bad keys surface here rather than as parse errors.
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    if (!chosen.has_value()) {
        std::cout << app.help();
        return 2;
    }

    try {
        const embasin::ExperimentReport report = embasin::run_experiment(*chosen);
        if (!chosen->quiet) {
            for (const auto& item : report.assertions) {
                std::cout << (item.pass ? "[PASS] " : "[FAIL] ") << item.name
                          << " observed=" << embasin::format_double(item.observed)
                          << " bound=" << embasin::format_double(item.bound) << "\n";
            }
            for (const auto& path : report.artifact_paths) {
                std::cout << "wrote " << path << "\n";
            }
            std::cout << "runtime_seconds " << report.runtime_seconds << "\n";
        }
        return report.all_pass() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
