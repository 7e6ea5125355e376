#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "slva/metric_embed.hpp"
#include "slva/warp.hpp"

namespace slva {

struct CloudPoint {
    double distance = 0.0;
    double semivariance = 0.0;
    int first = 0;   // location indices of the pair
    int second = 0;
};

/// Empirical semivariances for every unordered pair of locations.
struct VariogramCloud {
    std::vector<CloudPoint> points;
};

struct MaternParams {
    double nugget = 0.0;     // iota
    double semisill = 1.0;   // sigma^2
    double shape = 0.5;      // nu
    double range = 1.0;      // rho

    void validate() const;
    double sill() const noexcept { return nugget + semisill; }
};

struct ExponentialParams {
    double nugget = 0.0;
    double sill = 1.0;  // partial sill multiplying (1 - exp(-d/scale))
    double scale = 1.0; // psi

    void validate() const;
};

inline constexpr double kShapeMin = 0.05;
inline constexpr double kShapeMax = 150.0;

enum class VariogramModel { Matern, Exponential };

using VariogramParams = std::variant<MaternParams, ExponentialParams>;

/// Semivariance gamma(d). gamma(0) is exactly 0; the nugget is the d -> 0+ limit.
double model_semivariance(double d, const VariogramParams& params);

/// gamma(infinity) = nugget + (semi)sill.
double model_sill(const VariogramParams& params);

/// Half the squared L2 distance between each pair of maps.
VariogramCloud semivariance_cloud(std::span<const MonotoneMap> maps,
                                  const std::vector<std::string>& ids, const DistanceMatrix& d);

/// Equal-count binning: points sorted by distance and averaged within bins.
VariogramCloud bin_cloud(const VariogramCloud& cloud, int bins);

enum class ReweightScheme {
    InverseSquared,  // weights 1/gamma^2 (default)
    Squared,         // weights gamma^2
};

struct IrwlsOptions {
    VariogramModel model = VariogramModel::Matern;
    ReweightScheme reweight = ReweightScheme::InverseSquared;
    int max_outer = 20;
    double outer_tolerance = 1e-4;  // max relative parameter change
    int max_inner = 100;
    double inner_tolerance = 1e-6;  // relative step size
    int bins = 0;                   // 0: fit the raw cloud
    /// Upper bound on the range as a fraction of the largest cloud distance.
    /// Beyond about half the largest lag the cloud says little about the sill,
    /// and unbounded ranges extrapolate smooth, near-singular covariances.
    double max_range_fraction = 0.5;
};

struct VariogramFit {
    VariogramParams params;
    bool converged = false;
    int outer_iterations = 0;
    int inner_iterations = 0;  // total over all outer passes
    double weighted_rss = 0.0;
};

/// Iteratively reweighted nonlinear least squares: uniform weights first, then
/// weights from the current fit, until the parameters settle.
VariogramFit fit_irwls(const VariogramCloud& cloud, const IrwlsOptions& options = {});

/// One weighted Levenberg-Marquardt solve with fixed weights from `start`.
VariogramFit fit_weighted(const VariogramCloud& cloud, std::span<const double> weights,
                          const VariogramParams& start, const IrwlsOptions& options = {});

/// Starting values derived from the cloud.
VariogramParams initial_params(const VariogramCloud& cloud, VariogramModel model);

struct CovMatrix {
    Eigen::MatrixXd entries;
    double condition = 0.0;  // ratio of extreme eigenvalues
};

/// C_ii = 2 gamma(inf), C_ik = 2 gamma(inf) - 2 gamma(d_ik). Throws
/// NumericalError when the result is not positive definite.
CovMatrix covariance_matrix(const VariogramParams& params, const DistanceMatrix& d);

struct Weights {
    std::vector<double> values;
    double condition = 0.0;
};

inline constexpr double kMaxCondition = 1e12;

/// C^{-1} 1 / (1' C^{-1} 1) through a Cholesky solve.
Weights blue_weights(const CovMatrix& c);

}  // namespace slva
