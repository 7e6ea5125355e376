#include "slva/metric_embed.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "slva/error.hpp"

namespace slva {
namespace {

void check_square_ids(const Eigen::MatrixXd& m, const std::vector<std::string>& ids) {
    if (m.rows() != m.cols()) throw ValidationError("distance matrix must be square");
    if (static_cast<Eigen::Index>(ids.size()) != m.rows()) {
        throw ValidationError("distance matrix has " + std::to_string(m.rows()) + " rows but " +
                              std::to_string(ids.size()) + " ids");
    }
}

struct Spectrum {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // matching columns
};

Spectrum spectrum_of(const DistanceMatrix& d) {
    const GramMatrix b = double_center(d);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b.entries);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of B failed");
    const Eigen::Index n = b.entries.rows();
    Spectrum s;
    s.values = eig.eigenvalues().reverse();
    s.vectors = eig.eigenvectors().rowwise().reverse();
    // Deterministic sign: the largest-magnitude entry of each vector is positive.
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index arg = 0;
        s.vectors.col(j).cwiseAbs().maxCoeff(&arg);
        if (s.vectors(arg, j) < 0.0) s.vectors.col(j) *= -1.0;
    }
    return s;
}

}  // namespace

void DistanceMatrix::validate() const {
    check_square_ids(entries, ids);
    const Eigen::Index n = entries.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (entries(i, i) != 0.0) throw ValidationError("distance matrix diagonal must be zero");
        for (Eigen::Index k = 0; k < n; ++k) {
            const double v = entries(i, k);
            if (!std::isfinite(v) || v < 0.0) {
                throw ValidationError("distance matrix entries must be finite and nonnegative");
            }
            if (std::abs(v - entries(k, i)) > 1e-9) {
                throw ValidationError("distance matrix is not symmetric at (" + ids[i] + ", " +
                                      ids[k] + ")");
            }
        }
    }
}

DistanceMatrix DistanceMatrix::reordered(const std::vector<std::string>& order) const {
    std::unordered_map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<Eigen::Index>(i));
    std::vector<Eigen::Index> pos;
    std::string missing;
    for (const auto& id : order) {
        auto it = index.find(id);
        if (it == index.end()) {
            missing += (missing.empty() ? "" : ", ") + id;
        } else {
            pos.push_back(it->second);
        }
    }
    if (!missing.empty()) throw ValidationError("ids missing from distance matrix: " + missing);
    DistanceMatrix out;
    out.ids = order;
    const Eigen::Index n = static_cast<Eigen::Index>(order.size());
    out.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) out.entries(i, k) = entries(pos[i], pos[k]);
    }
    return out;
}

DistanceMatrix symmetrize(const Eigen::MatrixXd& raw, std::vector<std::string> ids) {
    check_square_ids(raw, ids);
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        if (raw(i, i) != 0.0) throw ValidationError("raw distance diagonal must be zero");
        for (Eigen::Index k = 0; k < raw.cols(); ++k) {
            if (!std::isfinite(raw(i, k)) || raw(i, k) < 0.0) {
                throw ValidationError("raw distances must be finite and nonnegative");
            }
        }
    }
    DistanceMatrix d;
    d.ids = std::move(ids);
    d.entries = 0.5 * (raw + raw.transpose());
    return d;
}

DistanceMatrix metric_repair(const DistanceMatrix& d) {
    d.validate();
    DistanceMatrix out = d;
    Eigen::MatrixXd& m = out.entries;
    const Eigen::Index n = m.rows();
    // One pass gives shortest paths; rounding in the path sums can still leave
    // one-ulp breaches, so repeat until every floating-point triangle holds.
    bool changed = true;
    while (changed) {
        changed = false;
        for (Eigen::Index via = 0; via < n; ++via) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double first = m(i, via);
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double through = first + m(via, k);
                    if (through < m(i, k)) {
                        m(i, k) = through;
                        changed = true;
                    }
                }
            }
        }
    }
    return out;
}

GramMatrix double_center(const DistanceMatrix& d) {
    check_square_ids(d.entries, d.ids);
    const Eigen::MatrixXd sq = d.entries.cwiseProduct(d.entries);
    const Eigen::VectorXd row_mean = sq.rowwise().mean();
    const Eigen::RowVectorXd col_mean = sq.colwise().mean();
    const double grand = sq.mean();
    GramMatrix b;
    b.entries = sq;
    b.entries.colwise() -= row_mean;
    b.entries.rowwise() -= col_mean;
    b.entries.array() += grand;
    b.entries *= -0.5;
    b.entries = 0.5 * (b.entries + b.entries.transpose()).eval();
    return b;
}

Eigen::VectorXd gram_spectrum(const DistanceMatrix& d) { return spectrum_of(d).values; }

int positive_rank(const Eigen::VectorXd& eigenvalues_descending) {
    if (eigenvalues_descending.size() == 0) return 0;
    const double top = eigenvalues_descending[0];
    if (!(top > 0.0)) return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < eigenvalues_descending.size(); ++i) {
        if (eigenvalues_descending[i] > kEigenTolerance * top) ++rank;
    }
    return rank;
}

Embedding embed(const DistanceMatrix& d, int p) {
    d.validate();
    if (p < 1) throw ValidationError("embedding dimension must be positive");
    const Spectrum s = spectrum_of(d);
    const int rank = positive_rank(s.values);
    if (p > rank) {
        throw ValidationError("embedding dimension " + std::to_string(p) +
                              " exceeds positive rank " + std::to_string(rank) + " of B");
    }
    Embedding e;
    e.ids = d.ids;
    e.positive_rank = rank;
    e.eigenvalues = s.values.head(p);
    e.coords = s.vectors.leftCols(p) * e.eigenvalues.cwiseSqrt().asDiagonal();
    return e;
}

DistanceMatrix euclidean_distances(const Eigen::MatrixXd& coords, std::vector<std::string> ids) {
    const Eigen::Index n = coords.rows();
    if (static_cast<Eigen::Index>(ids.size()) != n) throw ValidationError("coordinate/id count mismatch");
    DistanceMatrix out;
    out.ids = std::move(ids);
    out.entries = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            const double dist = (coords.row(i) - coords.row(k)).norm();
            out.entries(i, k) = dist;
            out.entries(k, i) = dist;
        }
    }
    return out;
}

DistanceMatrix embedded_distances(const Embedding& e) { return euclidean_distances(e.coords, e.ids); }

std::pair<double, double> no_intercept_rss(const DistanceMatrix& target, const DistanceMatrix& predictor) {
    const Eigen::Index n = target.entries.rows();
    if (predictor.entries.rows() != n) throw ValidationError("regression matrices differ in size");
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            const double y = target.entries(i, k);
            const double x = predictor.entries(i, k);
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
    }
    if (!(sxx > 0.0)) return {syy, 0.0};
    const double slope = sxy / sxx;
    double rss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            const double r = target.entries(i, k) - slope * predictor.entries(i, k);
            rss += r * r;
        }
    }
    return {rss, slope};
}

DimensionSelection select_dimension(const DistanceMatrix& d, const DimensionRequest& request) {
    d.validate();
    DimensionSelection sel;
    switch (request.criterion) {
    case DimensionCriterion::Visualize:
        if (request.requested != 2 && request.requested != 3) {
            throw ValidationError("visualization dimension must be 2 or 3");
        }
        sel.chosen = request.requested;
        sel.positive_rank = positive_rank(gram_spectrum(d));
        return sel;
    case DimensionCriterion::Cap:
        if (request.requested < 1) throw ValidationError("requested dimension must be positive");
        sel.chosen = request.validity_cap > 0 ? std::min(request.requested, request.validity_cap)
                                              : request.requested;
        sel.positive_rank = positive_rank(gram_spectrum(d));
        return sel;
    case DimensionCriterion::Rss:
        if (request.baseline == nullptr) {
            throw ValidationError("rss dimension selection requires a baseline distance matrix");
        }
        break;
    case DimensionCriterion::SillNugget:
        if (!request.scorer) {
            throw ValidationError("sill_nugget dimension selection requires a scorer callback");
        }
        break;
    }

    const Spectrum s = spectrum_of(d);
    sel.positive_rank = positive_rank(s.values);
    int max_p = sel.positive_rank;
    if (request.max_dimension > 0) max_p = std::min(max_p, request.max_dimension);
    if (max_p < 1) throw DegenerateInputError("centred Gram matrix has no positive eigenvalues");

    const Eigen::Index n = d.entries.rows();
    if (request.criterion == DimensionCriterion::Rss) {
        const DistanceMatrix baseline = request.baseline->reordered(d.ids);
        sel.baseline_rss = no_intercept_rss(d, baseline).first;
        Eigen::MatrixXd squared = Eigen::MatrixXd::Zero(n, n);
        DistanceMatrix current{d.ids, Eigen::MatrixXd::Zero(n, n)};
        for (int p = 1; p <= max_p; ++p) {
            const Eigen::VectorXd column = s.vectors.col(p - 1) * std::sqrt(s.values[p - 1]);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = i + 1; k < n; ++k) {
                    const double diff = column[i] - column[k];
                    squared(i, k) += diff * diff;
                    current.entries(i, k) = std::sqrt(squared(i, k));
                    current.entries(k, i) = current.entries(i, k);
                }
            }
            const auto [rss, slope] = no_intercept_rss(d, current);
            const double score = sel.baseline_rss > 0.0 ? rss / sel.baseline_rss : rss;
            sel.table.push_back({p, score, rss, slope});
        }
        auto best = sel.table.begin();
        for (auto it = sel.table.begin(); it != sel.table.end(); ++it) {
            if (it->score < best->score) best = it;
        }
        sel.chosen = best->p;
        return sel;
    }

    for (int p = 1; p <= max_p; ++p) {
        Embedding e;
        e.ids = d.ids;
        e.eigenvalues = s.values.head(p);
        e.coords = s.vectors.leftCols(p) * e.eigenvalues.cwiseSqrt().asDiagonal();
        e.positive_rank = sel.positive_rank;
        const double score = request.scorer(p, embedded_distances(e));
        sel.table.push_back({p, score, 0.0, 0.0});
    }
    auto best = sel.table.begin();
    for (auto it = sel.table.begin(); it != sel.table.end(); ++it) {
        if (it->score > best->score) best = it;
    }
    sel.chosen = best->p;
    return sel;
}

DistanceMatrix geodesic_distances(const GeoCoords& coords) {
    const std::size_t n = coords.ids.size();
    if (coords.latitude.size() != n || coords.longitude.size() != n) {
        throw ValidationError("coordinate arrays differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double lat = coords.latitude[i];
        const double lon = coords.longitude[i];
        if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
            throw ValidationError("invalid latitude/longitude for '" + coords.ids[i] + "'");
        }
    }
    constexpr double rad = std::numbers::pi / 180.0;
    DistanceMatrix out;
    out.ids = coords.ids;
    out.entries = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i + 1; k < n; ++k) {
            const double phi1 = coords.latitude[i] * rad;
            const double phi2 = coords.latitude[k] * rad;
            const double dphi = phi2 - phi1;
            const double dlambda = (coords.longitude[k] - coords.longitude[i]) * rad;
            const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                             std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
            const double dist = 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
            out.entries(i, k) = dist;
            out.entries(k, i) = dist;
        }
    }
    return out;
}

}  // namespace slva
