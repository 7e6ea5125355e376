#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slva/curve_smoothing.hpp"
#include "slva/metric_embed.hpp"
#include "slva/registration.hpp"
#include "slva/warp.hpp"

namespace slva {

enum class Scheme { A, B, C, D };

Scheme parse_scheme(const std::string& text);
char scheme_letter(Scheme s);

struct SimConfig {
    Scheme scheme = Scheme::A;
    double psi = 0.1;
    int replicates = 300;
    int locations = 36;
    int times = 100;
    double amplitude_variance = 0.04;  // xi ~ Normal(1, .)
    double noise_variance = 0.004;
    double nugget = 0.1;
    std::uint64_t seed = 0;
    /// Draw locations once from the base seed instead of once per replicate
    /// (scheme A is a fixed grid either way).
    bool freeze_locations = false;
    int grid_size = kDefaultGridSize;
    int threads = 1;
    IrwlsOptions variogram;

    void validate() const;
};

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream). Streams never overlap in their
/// seed material, so per-replicate results do not depend on scheduling.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// n x 2 coordinates in the unit square. Draws outside the square are redrawn.
Eigen::MatrixXd gen_locations(Scheme scheme, Rng& rng, int n = 36);

struct WarpKnots {
    std::vector<double> zeta1, zeta2;            // correlated Gaussians
    std::vector<double> zeta1_star, zeta2_star;  // 0.25 Phi(zeta) - 0.125
};

/// 0.25 Phi(z) - 0.125.
double squash(double z);

/// Two independent Normal(0, nugget I + exp(-d/psi)) draws mapped through squash.
WarpKnots gen_warp_knots(const Eigen::MatrixXd& locations, double psi, double nugget, Rng& rng);

/// Piecewise-linear h^{-1} through (0,0), (0.25-a, 0.25+a), (0.75-b, 0.75+b), (1,1).
MonotoneMap warp_from_knots(double a, double b, int grid_size = kDefaultGridSize);

std::vector<MonotoneMap> gen_true_warps(const Eigen::MatrixXd& locations, double psi, double nugget,
                                        Rng& rng, int grid_size = kDefaultGridSize);

/// y_ij = xi_i sin(pi h_i^{-1}(t_j)) + eps_ij on t_j = (j-1)/(m-1).
std::vector<SampledCurve> gen_dataset(std::span<const MonotoneMap> inverse_warps, const SimConfig& config,
                                      Rng& rng, const std::vector<std::string>& ids);

/// (1/n) sum_i of the squared L2 distance between estimated and true maps.
double mse(std::span<const MonotoneMap> estimated, std::span<const MonotoneMap> truth);

/// Location ids used by the generator: "s01", "s02", ...
std::vector<std::string> location_ids(int n);

/// One synthetic data set.
struct Replicate {
    std::vector<std::string> ids;
    Eigen::MatrixXd locations;
    WarpKnots knots;
    std::vector<MonotoneMap> true_inverse_warps;
    std::vector<SampledCurve> curves;
    DistanceMatrix distances;
};

/// Data set for attempt index `attempt` (deterministic in seed and attempt).
Replicate generate_replicate(const SimConfig& config, std::uint64_t attempt);

struct ReplicateOutcome {
    bool accepted = false;
    std::string reason;  // why the replicate was rejected
    double nonspatial_mse = 0.0;
    double spatial_mse = 0.0;
};

/// Registers one data set in both modes and scores both against the truth.
ReplicateOutcome run_replicate(const SimConfig& config, std::uint64_t attempt);

struct SimRow {
    Scheme scheme = Scheme::A;
    double psi = 0.0;
    RegistrationMode mode = RegistrationMode::Spatial;
    int replicates = 0;
    int rejected = 0;
    double avg_mse = 0.0;
    double ci95_halfwidth = 0.0;  // 1.96 sd / sqrt(replicates)
};

struct SimResult {
    SimRow nonspatial;
    SimRow spatial;
    bool complete = true;  // false when the attempt cap was hit first
    std::vector<double> nonspatial_mse;  // accepted replicates, attempt order
    std::vector<double> spatial_mse;
    std::vector<std::uint64_t> accepted_attempts;
    std::vector<std::uint64_t> rejected_attempts;
    std::vector<std::string> rejection_reasons;
};

/// Mean and 1.96 sd / sqrt(n) half-width.
std::pair<double, double> mean_and_halfwidth(std::span<const double> values);

/// Runs replicates until `replicates` are accepted or 2x that many attempts
/// have been made. Bit-reproducible for any thread count.
SimResult run_experiment(const SimConfig& config);

}  // namespace slva
