#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace slva {

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise distances.
struct DistanceMatrix {
    std::vector<std::string> ids;
    Eigen::MatrixXd entries;

    /// Throws ValidationError when the invariants fail (symmetry within 1e-9).
    void validate() const;
    std::size_t size() const noexcept { return ids.size(); }
    /// Rows/columns reordered to match `order` (every id must be present).
    DistanceMatrix reordered(const std::vector<std::string>& order) const;
};

/// Double-centred matrix -1/2 H (D o D) H.
struct GramMatrix {
    Eigen::MatrixXd entries;
};

/// Classical-scaling coordinates.
struct Embedding {
    std::vector<std::string> ids;
    Eigen::MatrixXd coords;       // n x p, column j = sqrt(lambda_j) u_j
    Eigen::VectorXd eigenvalues;  // p leading eigenvalues, descending
    int positive_rank = 0;        // eigenvalues above 1e-9 * lambda_max
    int dimension() const noexcept { return static_cast<int>(coords.cols()); }
};

struct GeoCoords {
    std::vector<std::string> ids;
    std::vector<double> latitude;   // degrees
    std::vector<double> longitude;  // degrees
};

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kEigenTolerance = 1e-9;

/// (raw + raw')/2; raw must be square, nonnegative, zero diagonal.
DistanceMatrix symmetrize(const Eigen::MatrixXd& raw, std::vector<std::string> ids);

/// Largest metric dominated by d (all-pairs shortest paths, Floyd-Warshall).
DistanceMatrix metric_repair(const DistanceMatrix& d);

GramMatrix double_center(const DistanceMatrix& d);

/// Eigenvalues of the centred Gram matrix, descending.
Eigen::VectorXd gram_spectrum(const DistanceMatrix& d);

/// Number of eigenvalues of B above kEigenTolerance * lambda_max.
int positive_rank(const Eigen::VectorXd& eigenvalues_descending);

/// Classical-scaling embedding in p dimensions. Throws ValidationError when p
/// exceeds the positive rank of B.
Embedding embed(const DistanceMatrix& d, int p);

DistanceMatrix embedded_distances(const Embedding& e);

/// Pairwise Euclidean distances between the rows of `coords`.
DistanceMatrix euclidean_distances(const Eigen::MatrixXd& coords, std::vector<std::string> ids);

enum class DimensionCriterion {
    Rss,          // no-intercept regression of d on d*(p), relative to a baseline
    SillNugget,   // maximize a caller-supplied sill-to-nugget score
    Cap,          // min(requested, model validity cap)
    Visualize,    // 2 or 3
};

struct DimensionScore {
    int p = 0;
    double score = 0.0;           // rss: RSS relative to baseline; sill_nugget: scorer value
    double rss = 0.0;             // absolute RSS (rss criterion only)
    double slope = 0.0;           // fitted no-intercept slope (rss criterion only)
};

struct DimensionSelection {
    int chosen = 0;
    int positive_rank = 0;
    std::vector<DimensionScore> table;
    /// RSS of the baseline regression (rss criterion). When zero the table's
    /// score column carries absolute RSS instead.
    double baseline_rss = 0.0;
};

/// Scores candidate p given the embedded distance matrix at that p.
using DimensionScorer = std::function<double(int p, const DistanceMatrix& embedded)>;

struct DimensionRequest {
    DimensionCriterion criterion = DimensionCriterion::Rss;
    const DistanceMatrix* baseline = nullptr;  // rss
    DimensionScorer scorer;                    // sill_nugget
    int requested = 0;                         // cap: requested p; viz: 2 or 3
    int validity_cap = 0;                      // cap: model validity cap (0 = none)
    int max_dimension = 0;                     // rss/sill_nugget: 0 = positive rank
};

DimensionSelection select_dimension(const DistanceMatrix& d, const DimensionRequest& request);

/// Residual sum of squares and slope of the no-intercept regression of the
/// upper triangle of `target` on that of `predictor`.
std::pair<double, double> no_intercept_rss(const DistanceMatrix& target,
                                           const DistanceMatrix& predictor);

/// Great-circle distances in km (haversine).
DistanceMatrix geodesic_distances(const GeoCoords& coords);

}  // namespace slva
