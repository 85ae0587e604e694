#pragma once

// The statistical model and its geometry: the symmetric two-component
// spherical Gaussian mixture 1/2 N(theta*, sigma^2 I) + 1/2 N(-theta*,
// sigma^2 I), the half-space/ball regions whose intersection forms the
// basin of attraction, and seeded data generation.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace embasin {

struct MixtureModel {
    Eigen::VectorXd theta_star;  // component center, length d
    double sigma = 1.0;          // known noise standard deviation

    MixtureModel(Eigen::VectorXd center, double noise_sigma);

    int dim() const { return static_cast<int>(theta_star.size()); }
    double norm_theta_star() const { return theta_star.norm(); }
    double snr() const { return theta_star.norm() / sigma; }

    // Stable hash of (d, sigma, theta*) identifying the generating model
    // in dataset sidecars and run summaries.
    std::string fingerprint() const;
};

// Half-space/ball parameters; a in (0,1) and r >= 1 are structural
// requirements of the theory and are enforced at construction.
struct Region {
    double a;
    double r;
    Region(double a_in, double r_in);
};

struct Dataset {
    Eigen::MatrixXd points;           // n x d
    std::vector<double> labels;       // latent signs, diagnostics only
    std::uint64_t seed = 0;
    std::string model_fingerprint;

    int n() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

bool in_half_space(const Eigen::VectorXd& theta, const MixtureModel& model, double a);
bool in_ball(const Eigen::VectorXd& theta, const MixtureModel& model, double r);
bool in_D(const Eigen::VectorXd& theta, const MixtureModel& model, const Region& region);
// Sign-symmetrized membership: |<theta, theta*>| >= a ||theta*||^2 inside the ball.
bool in_D_tilde(const Eigen::VectorXd& theta, const MixtureModel& model, const Region& region);

// n iid draws y_i = eta_i theta* + sigma z_i with recorded labels eta_i.
// Bit-identical regeneration from (model, n, seed).
Dataset sample_dataset(const MixtureModel& model, int n, std::uint64_t seed);

// Subtracts the column mean from every row; returns the mean.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> center_data(const Eigen::MatrixXd& points);

enum class ProbeMode { kUniformRejection, kStratifiedAxis };

// Probe points for "for all theta in D" style verification. Rejection mode
// draws uniformly from the ball and keeps points in the half-space;
// stratified mode lays a deterministic grid over (inner-product, norm)
// coordinates covering corners and the segment from a theta* to r theta*.
// Both always include theta* itself and a near-boundary point.
std::vector<Eigen::VectorXd> sample_region_points(const MixtureModel& model,
                                                  const Region& region, int count,
                                                  std::uint64_t seed, ProbeMode mode);

// CSV round trip: header y1,...,yd,label plus a JSON sidecar carrying
// {n, d, sigma, seed, model_fingerprint}.
void write_dataset_csv(const Dataset& dataset, const MixtureModel& model,
                       const std::string& csv_path, const std::string& sidecar_path);
Dataset read_dataset_csv(const std::string& csv_path, const std::string& sidecar_path);

// Shortest-round-trip style formatting used by every artifact writer so
// reruns are byte-identical.
std::string format_double(double value);

}  // namespace embasin
