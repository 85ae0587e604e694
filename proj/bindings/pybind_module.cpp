#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "embasin/gauss_hermite.hpp"
#include "embasin/initialization.hpp"
#include "embasin/mixture_model.hpp"
#include "embasin/population_em.hpp"
#include "embasin/sample_em.hpp"
#include "embasin/scalar_kernels.hpp"
#include "embasin/verification.hpp"

namespace py = pybind11;

namespace {

Eigen::VectorXd to_eigen(const std::vector<double>& values) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) out(static_cast<Eigen::Index>(i)) = values[i];
    return out;
}

std::vector<double> from_eigen(const Eigen::VectorXd& values) {
    return std::vector<double>(values.data(), values.data() + values.size());
}

embasin::InitStrategy parse_strategy(const std::string& name) {
    if (name == "known_norm") return embasin::InitStrategy::kKnownNorm;
    if (name == "estimated_norm") return embasin::InitStrategy::kEstimatedNorm;
    throw std::invalid_argument("strategy must be known_norm or estimated_norm");
}

py::dict trace_to_dict(const embasin::EmTrace& trace) {
    py::dict out;
    out["errors"] = trace.errors;
    out["raw_errors"] = trace.raw_errors;
    out["ratios"] = trace.ratios;
    out["in_region"] = trace.in_region;
    out["stop_reason"] = embasin::to_string(trace.stop_reason);
    out["final_error"] = trace.final_error();
    out["n"] = trace.n;
    out["seed"] = trace.seed;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, module) {
    module.doc() =
        "EM for the symmetric two-component spherical Gaussian mixture: scalar "
        "kernels, the population update map, finite-sample EM, initializers, and "
        "the bound-verification experiments.";

    module.def("omega", &embasin::omega, py::arg("t"),
               "Posterior weight 1 / (1 + exp(-2 t)).");
    module.def("omega_d1", &embasin::omega_d1, py::arg("t"));
    module.def("omega_d2", &embasin::omega_d2, py::arg("t"));
    module.def("omega_d3", &embasin::omega_d3, py::arg("t"));
    module.def("std_normal_cdf", &embasin::std_normal_cdf, py::arg("t"));
    module.def("std_normal_upper_tail", &embasin::std_normal_upper_tail, py::arg("t"));
    module.def("chi_square_upper_tail", &embasin::chi_square_upper_tail, py::arg("d"),
               py::arg("x"));
    module.def("chi_square_chernoff_bound", &embasin::chi_square_chernoff_bound,
               py::arg("d"), py::arg("r"));
    module.def("gamma_contraction", &embasin::gamma_contraction, py::arg("s"), py::arg("r"),
               "Contraction factor 76 r^4 exp(-(s / r)^2 / 16).");
    module.def("lemma_omega_lower_bound", &embasin::lemma_omega_lower_bound, py::arg("a"),
               py::arg("s"), py::arg("r"));
    module.def("init_prob_lower_bound", &embasin::init_prob_lower_bound, py::arg("a"),
               py::arg("r"), py::arg("d"));
    module.def("init_prob_lower_bound_estimated", &embasin::init_prob_lower_bound_estimated,
               py::arg("a"), py::arg("r"), py::arg("d"), py::arg("p_event"));
    module.def("t_hat_tail_bound", &embasin::t_hat_tail_bound, py::arg("n"), py::arg("d"),
               py::arg("sigma"), py::arg("norm_theta"), py::arg("epsilon"));

    module.def(
        "gh_rule",
        [](int order) {
            const embasin::GhRule rule = embasin::gh_rule(order);
            return py::make_tuple(rule.nodes, rule.weights);
        },
        py::arg("order"), "Gauss-Hermite nodes and weights for exp(-x^2).");
    module.def(
        "expect_omega",
        [](double alpha, double beta, int order) {
            return embasin::expect_omega(alpha, beta, embasin::gh_rule(order));
        },
        py::arg("alpha"), py::arg("beta"), py::arg("order") = 61,
        "E omega(alpha Z + beta) for standard normal Z.");
    module.def(
        "expect_omega_prime",
        [](double alpha, double beta, int order) {
            return embasin::expect_omega_prime(alpha, beta, embasin::gh_rule(order));
        },
        py::arg("alpha"), py::arg("beta"), py::arg("order") = 61);
    module.def(
        "expect_omega_second",
        [](double alpha, double beta, int order) {
            return embasin::expect_omega_second(alpha, beta, embasin::gh_rule(order));
        },
        py::arg("alpha"), py::arg("beta"), py::arg("order") = 61);

    py::class_<embasin::MixtureModel>(module, "MixtureModel")
        .def(py::init([](const std::vector<double>& center, double sigma) {
                 return embasin::MixtureModel(to_eigen(center), sigma);
             }),
             py::arg("center"), py::arg("sigma"))
        .def_property_readonly("center",
                               [](const embasin::MixtureModel& model) {
                                   return from_eigen(model.theta_star);
                               })
        .def_property_readonly("sigma",
                               [](const embasin::MixtureModel& model) { return model.sigma; })
        .def("dim", &embasin::MixtureModel::dim)
        .def("norm_theta_star", &embasin::MixtureModel::norm_theta_star)
        .def("snr", &embasin::MixtureModel::snr);

    py::class_<embasin::Region>(module, "Region")
        .def(py::init<double, double>(), py::arg("a"), py::arg("r"))
        .def_readonly("a", &embasin::Region::a)
        .def_readonly("r", &embasin::Region::r);

    py::class_<embasin::Dataset>(module, "Dataset")
        .def("n", &embasin::Dataset::n)
        .def("dim", &embasin::Dataset::dim)
        .def_readonly("seed", &embasin::Dataset::seed)
        .def("points", [](const embasin::Dataset& data) {
            std::vector<std::vector<double>> rows(data.n());
            for (int i = 0; i < data.n(); ++i) {
                rows[i] = from_eigen(data.points.row(i).transpose());
            }
            return rows;
        });

    module.def(
        "sample_dataset",
        [](const embasin::MixtureModel& model, int n, std::uint64_t seed) {
            return embasin::sample_dataset(model, n, seed);
        },
        py::arg("model"), py::arg("n"), py::arg("seed"));

    module.def(
        "pop_em",
        [](const std::vector<double>& theta, const embasin::MixtureModel& model, int order) {
            return from_eigen(embasin::pop_em(to_eigen(theta), model, embasin::gh_rule(order)));
        },
        py::arg("theta"), py::arg("model"), py::arg("order") = 61,
        "One application of the population EM map.");
    module.def(
        "sample_em_step",
        [](const std::vector<double>& theta, const embasin::Dataset& data, double sigma) {
            return from_eigen(embasin::sample_em_step(to_eigen(theta), data, sigma));
        },
        py::arg("theta"), py::arg("dataset"), py::arg("sigma"));
    module.def(
        "sign_aligned_error",
        [](const std::vector<double>& theta, const embasin::MixtureModel& model) {
            return embasin::sign_aligned_error(to_eigen(theta), model);
        },
        py::arg("theta"), py::arg("model"));
    module.def(
        "log_likelihood",
        [](const std::vector<double>& theta, const embasin::Dataset& data, double sigma) {
            return embasin::log_likelihood(to_eigen(theta), data, sigma);
        },
        py::arg("theta"), py::arg("dataset"), py::arg("sigma"));
    module.def(
        "t_hat",
        [](const embasin::Dataset& data, double sigma) { return embasin::t_hat(data, sigma); },
        py::arg("dataset"), py::arg("sigma"),
        "Debiased squared-norm estimate of ||theta*||^2.");

    module.def(
        "init_known_norm",
        [](const embasin::MixtureModel& model, std::uint64_t seed) {
            return from_eigen(embasin::init_known_norm(model, seed));
        },
        py::arg("model"), py::arg("seed"));
    module.def(
        "init_estimated_norm",
        [](const embasin::Dataset& data, double sigma, std::uint64_t seed) {
            const auto [theta, that] = embasin::init_estimated_norm(data, sigma, seed);
            return py::make_tuple(from_eigen(theta), that);
        },
        py::arg("dataset"), py::arg("sigma"), py::arg("seed"));

    module.def(
        "run_em",
        [](const std::vector<double>& theta0, const embasin::Dataset& data,
           const embasin::MixtureModel& model, int max_iter, double step_tol, double a,
           double r) {
            embasin::EmOptions options;
            options.max_iter = max_iter;
            options.step_tol = step_tol;
            options.region = embasin::Region(a, r);
            return trace_to_dict(embasin::run_em(to_eigen(theta0), data, model, options));
        },
        py::arg("theta0"), py::arg("dataset"), py::arg("model"), py::arg("max_iter") = 500,
        py::arg("step_tol") = 1e-10, py::arg("a") = 0.5, py::arg("r") = 6.0,
        "Iterate the sample EM map; returns the error trace as a dict.");

    module.def(
        "multi_start",
        [](const embasin::Dataset& data, const embasin::MixtureModel& model, int m,
           const std::string& strategy, std::uint64_t seed, int max_iter, double step_tol,
           double a, double r) {
            embasin::EmOptions options;
            options.max_iter = max_iter;
            options.step_tol = step_tol;
            options.region = embasin::Region(a, r);
            const embasin::MultiStartResult result = embasin::multi_start(
                data, model, m, parse_strategy(strategy), options, seed);
            py::dict out;
            out["best_index"] = result.best_index;
            std::vector<double> finals;
            finals.reserve(result.traces.size());
            for (const auto& trace : result.traces) finals.push_back(trace.final_error());
            out["final_errors"] = finals;
            out["best_final_error"] = result.best().final_error();
            return out;
        },
        py::arg("dataset"), py::arg("model"), py::arg("m"),
        py::arg("strategy") = "known_norm", py::arg("seed") = 1, py::arg("max_iter") = 500,
        py::arg("step_tol") = 1e-10, py::arg("a") = 0.5, py::arg("r") = 6.0,
        "Run m restarts and pick the likelihood winner; returns a summary dict.");

    module.def(
        "run_experiment",
        [](const std::string& config_json) {
            const nlohmann::json j = nlohmann::json::parse(config_json, nullptr, false);
            if (j.is_discarded()) throw std::invalid_argument("config is not valid JSON");
            std::string experiment = "converge";
            if (j.contains("experiment") && j["experiment"].is_string()) {
                experiment = j["experiment"].get<std::string>();
            }
            const embasin::ExperimentConfig cfg =
                embasin::ExperimentConfig::from_json(j, embasin::default_config(experiment));
            const embasin::ExperimentReport report = embasin::run_experiment(cfg);
            py::dict out;
            out["experiment"] = report.config.experiment;
            out["all_pass"] = report.all_pass();
            py::list assertions;
            for (const auto& item : report.assertions) {
                py::dict row;
                row["name"] = item.name;
                row["observed"] = item.observed;
                row["bound"] = item.bound;
                row["pass"] = item.pass;
                assertions.append(row);
            }
            out["assertions"] = assertions;
            out["artifacts"] = report.artifact_paths;
            return out;
        },
        py::arg("config_json"),
        "Run one verification experiment from a JSON config string.");

    module.def("experiment_names", [] { return embasin::experiment_names(); });
}
