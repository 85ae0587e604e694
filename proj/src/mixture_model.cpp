#include "embasin/mixture_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "embasin/rng.hpp"

namespace embasin {

MixtureModel::MixtureModel(Eigen::VectorXd center, double noise_sigma)
    : theta_star(std::move(center)), sigma(noise_sigma) {
    if (theta_star.size() < 1) {
        throw std::invalid_argument("MixtureModel: dimension must be >= 1");
    }
    if (!(theta_star.norm() > 0.0)) {
        throw std::invalid_argument("MixtureModel: ||theta*|| must be positive");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("MixtureModel: sigma must be positive and finite");
    }
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::string MixtureModel::fingerprint() const {
    // FNV-1a over a canonical text rendering of (d, sigma, theta*).
    std::string text = std::to_string(dim()) + "|" + format_double(sigma);
    for (int i = 0; i < dim(); ++i) text += "|" + format_double(theta_star(i));
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Region::Region(double a_in, double r_in) : a(a_in), r(r_in) {
    if (!(a > 0.0 && a < 1.0)) {
        throw std::invalid_argument("Region: a must lie in (0, 1)");
    }
    if (!(r >= 1.0)) {
        throw std::invalid_argument("Region: r must be >= 1");
    }
}

namespace {

void check_dim(const Eigen::VectorXd& theta, const MixtureModel& model, const char* who) {
    if (theta.size() != model.theta_star.size()) {
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
    }
}

}  // namespace

bool in_half_space(const Eigen::VectorXd& theta, const MixtureModel& model, double a) {
    check_dim(theta, model, "in_half_space");
    const double norm2 = model.theta_star.squaredNorm();
    return theta.dot(model.theta_star) >= a * norm2;
}

bool in_ball(const Eigen::VectorXd& theta, const MixtureModel& model, double r) {
    check_dim(theta, model, "in_ball");
    return theta.norm() <= r * model.norm_theta_star();
}

bool in_D(const Eigen::VectorXd& theta, const MixtureModel& model, const Region& region) {
    return in_half_space(theta, model, region.a) && in_ball(theta, model, region.r);
}

bool in_D_tilde(const Eigen::VectorXd& theta, const MixtureModel& model, const Region& region) {
    check_dim(theta, model, "in_D_tilde");
    const double norm2 = model.theta_star.squaredNorm();
    return std::abs(theta.dot(model.theta_star)) >= region.a * norm2 &&
           in_ball(theta, model, region.r);
}

Dataset sample_dataset(const MixtureModel& model, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");
    const int d = model.dim();
    Dataset dataset;
    dataset.points.resize(n, d);
    dataset.labels.resize(n);
    dataset.seed = seed;
    dataset.model_fingerprint = model.fingerprint();
    Philox gen(seed, /*stream=*/0);
    for (int i = 0; i < n; ++i) {
        const double eta = gen.rademacher();
        dataset.labels[i] = eta;
        for (int j = 0; j < d; ++j) {
            dataset.points(i, j) = eta * model.theta_star(j) + model.sigma * gen.normal();
        }
    }
    return dataset;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> center_data(const Eigen::MatrixXd& points) {
    if (points.rows() < 1) throw std::invalid_argument("center_data: need n >= 1");
    Eigen::VectorXd mean = points.colwise().mean();
    Eigen::MatrixXd centered = points.rowwise() - mean.transpose();
    return {std::move(centered), std::move(mean)};
}

namespace {

// A deterministic unit vector orthogonal to theta*, rotated pseudo-randomly
// by the stream so stratified probes do not all share one 2-plane.
Eigen::VectorXd orthogonal_direction(const MixtureModel& model, Philox& gen) {
    const int d = model.dim();
    if (d == 1) return Eigen::VectorXd::Zero(1);
    Eigen::VectorXd u(d);
    for (int j = 0; j < d; ++j) u(j) = gen.normal();
    const Eigen::VectorXd axis = model.theta_star.normalized();
    u -= u.dot(axis) * axis;
    const double norm = u.norm();
    if (norm < 1e-12) {
        // astronomically unlikely; fall back to any coordinate direction
        u.setZero();
        u(0) = 1.0;
        u -= u.dot(axis) * axis;
        return u.normalized();
    }
    return u / norm;
}

Eigen::VectorXd point_from_axis_coords(const MixtureModel& model, double h, double b,
                                       Philox& gen) {
    // h = <theta, theta*>/||theta*||^2, b = ||theta||/||theta*||, b >= |h|.
    const Eigen::VectorXd axis = model.theta_star.normalized();
    const double scale = model.norm_theta_star();
    const double ortho = std::sqrt(std::max(0.0, b * b - h * h)) * scale;
    return h * model.theta_star + ortho * orthogonal_direction(model, gen);
}

}  // namespace

std::vector<Eigen::VectorXd> sample_region_points(const MixtureModel& model,
                                                  const Region& region, int count,
                                                  std::uint64_t seed, ProbeMode mode) {
    if (count < 1) throw std::invalid_argument("sample_region_points: count must be >= 1");
    const int d = model.dim();
    if (mode == ProbeMode::kUniformRejection && d > 64) {
        throw std::invalid_argument("sample_region_points: rejection mode capped at d <= 64");
    }
    std::vector<Eigen::VectorXd> points;
    points.reserve(count);

    // Fixed inclusions: theta* and a point hugging the half-space boundary.
    Philox gen(seed, /*stream=*/1);
    points.push_back(model.theta_star);
    if (static_cast<int>(points.size()) < count) {
        const double h = region.a * 1.000001;
        const double b = std::min(region.r, std::max(1.0, h * 1.5));
        points.push_back(point_from_axis_coords(model, h, b, gen));
    }

    if (mode == ProbeMode::kStratifiedAxis) {
        // Grid over the (h, b) rectangle [a, r] x [h, r], plus the segment
        // from a theta* to r theta* along the axis itself.
        const int grid = std::max(2, static_cast<int>(std::ceil(std::sqrt(
                             static_cast<double>(count)))));
        for (int i = 0; static_cast<int>(points.size()) < count; ++i) {
            const int gi = i % grid;
            const int gj = (i / grid) % grid;
            const double h = region.a + (region.r - region.a) * gi / (grid - 1);
            double b = h + (region.r - h) * gj / (grid - 1);
            if (d == 1) b = h;  // the only d=1 points with <theta,theta*> = h are +-h theta*
            if (b < h) b = h;
            points.push_back(point_from_axis_coords(model, h, b, gen));
        }
    } else {
        // Uniform in the ball via normal direction + radial power transform;
        // keep only points on the correct side of the half-space.
        const double radius = region.r * model.norm_theta_star();
        long attempts = 0;
        long accepted = 0;
        while (static_cast<int>(points.size()) < count) {
            ++attempts;
            Eigen::VectorXd u(d);
            for (int j = 0; j < d; ++j) u(j) = gen.normal();
            const double norm = u.norm();
            if (norm == 0.0) continue;
            const double rad = radius * std::pow(gen.uniform(), 1.0 / d);
            Eigen::VectorXd candidate = (rad / norm) * u;
            if (in_half_space(candidate, model, region.a)) {
                points.push_back(std::move(candidate));
                ++accepted;
            }
            if (attempts >= 100000 && accepted == 0) {
                throw std::runtime_error(
                    "sample_region_points: rejection acceptance below 1e-5; "
                    "use stratified-axis mode");
            }
        }
    }
    points.resize(count);
    return points;
}

void write_dataset_csv(const Dataset& dataset, const MixtureModel& model,
                       const std::string& csv_path, const std::string& sidecar_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("write_dataset_csv: cannot open " + csv_path);
    const int d = dataset.dim();
    for (int j = 0; j < d; ++j) csv << "y" << (j + 1) << ",";
    csv << "label\n";
    for (int i = 0; i < dataset.n(); ++i) {
        for (int j = 0; j < d; ++j) csv << format_double(dataset.points(i, j)) << ",";
        csv << format_double(dataset.labels.empty() ? 0.0 : dataset.labels[i]) << "\n";
    }
    nlohmann::json sidecar{{"n", dataset.n()},
                           {"d", d},
                           {"sigma", model.sigma},
                           {"seed", dataset.seed},
                           {"model_fingerprint", dataset.model_fingerprint}};
    std::ofstream side(sidecar_path);
    if (!side) throw std::runtime_error("write_dataset_csv: cannot open " + sidecar_path);
    side << sidecar.dump(2) << "\n";
}

Dataset read_dataset_csv(const std::string& csv_path, const std::string& sidecar_path) {
    std::ifstream side(sidecar_path);
    if (!side) throw std::runtime_error("read_dataset_csv: cannot open " + sidecar_path);
    nlohmann::json sidecar = nlohmann::json::parse(side);
    const int n = sidecar.at("n").get<int>();
    const int d = sidecar.at("d").get<int>();

    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("read_dataset_csv: cannot open " + csv_path);
    std::string line;
    if (!std::getline(csv, line)) throw std::runtime_error("read_dataset_csv: empty file");
    const bool has_label = line.find("label") != std::string::npos;

    Dataset dataset;
    dataset.points.resize(n, d);
    dataset.labels.assign(n, 0.0);
    dataset.seed = sidecar.at("seed").get<std::uint64_t>();
    dataset.model_fingerprint = sidecar.at("model_fingerprint").get<std::string>();
    for (int i = 0; i < n; ++i) {
        if (!std::getline(csv, line)) {
            throw std::runtime_error("read_dataset_csv: fewer rows than sidecar n");
        }
        std::stringstream row(line);
        std::string cell;
        for (int j = 0; j < d; ++j) {
            if (!std::getline(row, cell, ',')) {
                throw std::runtime_error("read_dataset_csv: short row");
            }
            dataset.points(i, j) = std::stod(cell);
        }
        if (has_label && std::getline(row, cell, ',')) {
            dataset.labels[i] = std::stod(cell);
        }
        for (int j = 0; j < d; ++j) {
            if (!std::isfinite(dataset.points(i, j))) {
                throw std::runtime_error("read_dataset_csv: non-finite entry");
            }
        }
    }
    return dataset;
}

}  // namespace embasin
