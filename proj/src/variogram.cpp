#include "slva/variogram.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "slva/error.hpp"
#include "slva/special_functions.hpp"

namespace slva {
namespace {

// Inner solves stop once a full step lowers the cost by less than this fraction.
constexpr double kRelativeDecrease = 1.5e-8;

bool finite_all(std::initializer_list<double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

// Log-parameter vector and its box, shared by both models.
struct LogSpace {
    VariogramModel model;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int dim() const { return model == VariogramModel::Matern ? 4 : 3; }

    Eigen::VectorXd to_log(const VariogramParams& p) const {
        Eigen::VectorXd t(dim());
        if (model == VariogramModel::Matern) {
            const auto& m = std::get<MaternParams>(p);
            t << std::log(m.nugget), std::log(m.semisill), std::log(m.shape), std::log(m.range);
        } else {
            const auto& e = std::get<ExponentialParams>(p);
            t << std::log(e.nugget), std::log(e.sill), std::log(e.scale);
        }
        return t.cwiseMax(lower).cwiseMin(upper);
    }

    VariogramParams from_log(const Eigen::VectorXd& t) const {
        if (model == VariogramModel::Matern) {
            return MaternParams{std::exp(t[0]), std::exp(t[1]),
                                std::clamp(std::exp(t[2]), kShapeMin, kShapeMax), std::exp(t[3])};
        }
        return ExponentialParams{std::exp(t[0]), std::exp(t[1]), std::exp(t[2])};
    }

    Eigen::VectorXd project(const Eigen::VectorXd& t) const { return t.cwiseMax(lower).cwiseMin(upper); }
};

LogSpace make_space(const VariogramCloud& cloud, const IrwlsOptions& options) {
    const VariogramModel model = options.model;
    double mean_sv = 0.0;
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (const auto& p : cloud.points) {
        mean_sv += p.semivariance;
        dmin = std::min(dmin, p.distance);
        dmax = std::max(dmax, p.distance);
    }
    mean_sv /= static_cast<double>(cloud.points.size());
    const double var_lo = std::log(1e-10 * mean_sv);
    const double var_hi = std::log(1e6 * mean_sv);
    const double range_lo = std::log(1e-4 * dmin);
    const double range_hi = std::log(options.max_range_fraction * dmax);
    LogSpace s{model, {}, {}};
    if (model == VariogramModel::Matern) {
        s.lower.resize(4);
        s.upper.resize(4);
        s.lower << var_lo, var_lo, std::log(kShapeMin), range_lo;
        s.upper << var_hi, var_hi, std::log(kShapeMax), range_hi;
    } else {
        s.lower.resize(3);
        s.upper.resize(3);
        s.lower << var_lo, var_lo, range_lo;
        s.upper << var_hi, var_hi, range_hi;
    }
    return s;
}

// Model value and Jacobian row with respect to the log parameters.
double model_with_gradient(double d, const Eigen::VectorXd& t, VariogramModel model,
                           Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> grad) {
    constexpr double kStep = 1e-7;
    if (model == VariogramModel::Matern) {
        const double nugget = std::exp(t[0]);
        const double semisill = std::exp(t[1]);
        const double shape = std::exp(t[2]);
        const double range = std::exp(t[3]);
        const double corr = matern_correlation(d / range, shape);
        const double corr_shape = matern_correlation(d / range, std::exp(t[2] + kStep));
        const double corr_range = matern_correlation(d / std::exp(t[3] + kStep), shape);
        grad[0] = nugget;
        grad[1] = semisill * (1.0 - corr);
        grad[2] = -semisill * (corr_shape - corr) / kStep;
        grad[3] = -semisill * (corr_range - corr) / kStep;
        return nugget + semisill * (1.0 - corr);
    }
    const double nugget = std::exp(t[0]);
    const double sill = std::exp(t[1]);
    const double scale = std::exp(t[2]);
    const double e = std::exp(-d / scale);
    grad[0] = nugget;
    grad[1] = sill * (1.0 - e);
    grad[2] = -sill * e * d / scale;
    return nugget + sill * (1.0 - e);
}

double weighted_cost(const VariogramCloud& cloud, std::span<const double> w, const LogSpace& space,
                     const Eigen::VectorXd& t) {
    const VariogramParams p = space.from_log(t);
    double cost = 0.0;
    for (std::size_t j = 0; j < cloud.points.size(); ++j) {
        const double r = cloud.points[j].semivariance - model_semivariance(cloud.points[j].distance, p);
        cost += w[j] * r * r;
    }
    return cost;
}

double max_relative_change(const VariogramParams& a, const VariogramParams& b) {
    auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(y), 1e-300); };
    if (const auto* ma = std::get_if<MaternParams>(&a)) {
        const auto& mb = std::get<MaternParams>(b);
        return std::max({rel(ma->nugget, mb.nugget), rel(ma->semisill, mb.semisill),
                         rel(ma->shape, mb.shape), rel(ma->range, mb.range)});
    }
    const auto& ea = std::get<ExponentialParams>(a);
    const auto& eb = std::get<ExponentialParams>(b);
    return std::max({rel(ea.nugget, eb.nugget), rel(ea.sill, eb.sill), rel(ea.scale, eb.scale)});
}

// Largest change in the fitted semivariance over the cloud distances, relative
// to the sill. Parameters can drift along flat valleys of the cost (range
// against semisill when the cloud is nearly flat) while the fitted curve, and
// hence the covariance matrix, no longer moves.
double max_curve_change(const VariogramCloud& cloud, const VariogramParams& a, const VariogramParams& b) {
    const double scale = std::max(model_sill(b), 1e-300);
    double worst = 0.0;
    for (const auto& p : cloud.points) {
        worst = std::max(worst, std::abs(model_semivariance(p.distance, a) - model_semivariance(p.distance, b)));
    }
    return worst / scale;
}

void check_cloud(const VariogramCloud& cloud) {
    if (cloud.points.size() < 8) {
        throw ValidationError("variogram fit needs at least 8 cloud points, got " +
                              std::to_string(cloud.points.size()));
    }
    std::vector<double> distances;
    bool any_positive = false;
    for (const auto& p : cloud.points) {
        if (!finite_all({p.distance, p.semivariance}) || p.distance <= 0.0 || p.semivariance < 0.0) {
            throw ValidationError("cloud points need positive distances and nonnegative semivariances");
        }
        distances.push_back(p.distance);
        any_positive = any_positive || p.semivariance > 0.0;
    }
    std::sort(distances.begin(), distances.end());
    const auto distinct = std::unique(distances.begin(), distances.end()) - distances.begin();
    if (distinct < 3) throw ValidationError("variogram fit needs at least 3 distinct distances");
    if (!any_positive) throw DegenerateInputError("all semivariances are zero");
}

}  // namespace

void MaternParams::validate() const {
    if (!finite_all({nugget, semisill, shape, range}) || nugget < 0.0 || !(semisill > 0.0) ||
        shape < kShapeMin || shape > kShapeMax || !(range > 0.0)) {
        throw ValidationError("Matern parameters out of bounds");
    }
}

void ExponentialParams::validate() const {
    if (!finite_all({nugget, sill, scale}) || nugget < 0.0 || !(sill > 0.0) || !(scale > 0.0)) {
        throw ValidationError("exponential parameters out of bounds");
    }
}

double model_semivariance(double d, const VariogramParams& params) {
    if (!(d >= 0.0)) throw ValidationError("semivariance distance must be nonnegative");
    if (const auto* m = std::get_if<MaternParams>(&params)) {
        m->validate();
        if (d == 0.0) return 0.0;
        return m->nugget + m->semisill * (1.0 - matern_correlation(d / m->range, m->shape));
    }
    const auto& e = std::get<ExponentialParams>(params);
    e.validate();
    if (d == 0.0) return 0.0;
    return e.nugget + e.sill * (1.0 - std::exp(-d / e.scale));
}

double model_sill(const VariogramParams& params) {
    if (const auto* m = std::get_if<MaternParams>(&params)) return m->nugget + m->semisill;
    const auto& e = std::get<ExponentialParams>(params);
    return e.nugget + e.sill;
}

VariogramCloud semivariance_cloud(std::span<const MonotoneMap> maps, const std::vector<std::string>& ids,
                                  const DistanceMatrix& d) {
    if (maps.size() != ids.size()) throw ValidationError("map and id counts differ");
    if (maps.size() < 3) throw ValidationError("variogram cloud needs at least 3 locations");
    if (d.size() != ids.size()) {
        throw ValidationError("distance matrix covers " + std::to_string(d.size()) +
                              " locations, maps cover " + std::to_string(ids.size()));
    }
    const DistanceMatrix ordered = d.reordered(ids);
    VariogramCloud cloud;
    const int n = static_cast<int>(maps.size());
    cloud.points.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int k = i + 1; k < n; ++k) {
            cloud.points.push_back(
                {ordered.entries(i, k), 0.5 * squared_l2_distance(maps[i], maps[k]), i, k});
        }
    }
    return cloud;
}

VariogramCloud bin_cloud(const VariogramCloud& cloud, int bins) {
    if (bins < 1) throw ValidationError("bin count must be positive");
    std::vector<CloudPoint> sorted = cloud.points;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const CloudPoint& a, const CloudPoint& b) { return a.distance < b.distance; });
    VariogramCloud out;
    const std::size_t n = sorted.size();
    const std::size_t count = std::min<std::size_t>(bins, n);
    for (std::size_t b = 0; b < count; ++b) {
        const std::size_t lo = b * n / count;
        const std::size_t hi = (b + 1) * n / count;
        CloudPoint p{0.0, 0.0, -1, -1};
        for (std::size_t j = lo; j < hi; ++j) {
            p.distance += sorted[j].distance;
            p.semivariance += sorted[j].semivariance;
        }
        p.distance /= static_cast<double>(hi - lo);
        p.semivariance /= static_cast<double>(hi - lo);
        out.points.push_back(p);
    }
    return out;
}

VariogramParams initial_params(const VariogramCloud& cloud, VariogramModel model) {
    std::vector<CloudPoint> sorted = cloud.points;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const CloudPoint& a, const CloudPoint& b) { return a.distance < b.distance; });
    const std::size_t n = sorted.size();
    const std::size_t decile = std::max<std::size_t>(1, n / 10);
    double near = 0.0;
    for (std::size_t j = 0; j < decile; ++j) near += sorted[j].semivariance;
    near /= static_cast<double>(decile);
    double overall = 0.0;
    for (const auto& p : sorted) overall += p.semivariance;
    overall /= static_cast<double>(n);
    const double median = n % 2 == 1 ? sorted[n / 2].distance
                                     : 0.5 * (sorted[n / 2 - 1].distance + sorted[n / 2].distance);

    // Keep both variance components away from zero: in log coordinates a
    // start at 1e-12 barely moves.
    double nugget = std::clamp(near, 1e-3 * overall, 0.9 * overall);
    double partial = std::max(overall - nugget, 0.1 * overall);
    if (model == VariogramModel::Matern) return MaternParams{nugget, partial, 1.0, median};
    return ExponentialParams{nugget, partial, median};
}

VariogramFit fit_weighted(const VariogramCloud& cloud, std::span<const double> weights,
                          const VariogramParams& start, const IrwlsOptions& options) {
    check_cloud(cloud);
    if (weights.size() != cloud.points.size()) throw ValidationError("weight count differs from cloud size");
    if (!(options.max_range_fraction > 0.0)) throw ValidationError("max_range_fraction must be positive");
    const LogSpace space = make_space(cloud, options);
    const int dim = space.dim();
    const std::size_t m = cloud.points.size();

    Eigen::VectorXd theta = space.to_log(start);
    double cost = weighted_cost(cloud, weights, space, theta);
    double damping = 1e-3;
    Eigen::MatrixXd jac(m, dim);
    Eigen::VectorXd resid(m);

    VariogramFit fit;
    bool converged = false;
    int it = 0;
    for (; it < options.max_inner && !converged; ++it) {
        for (std::size_t j = 0; j < m; ++j) {
            const double sw = std::sqrt(weights[j]);
            const double g = model_with_gradient(cloud.points[j].distance, theta, options.model, jac.row(j));
            resid[j] = sw * (cloud.points[j].semivariance - g);
            jac.row(j) *= -sw;
        }
        const Eigen::MatrixXd normal = jac.transpose() * jac;
        const Eigen::VectorXd gradient = jac.transpose() * resid;
        const double diag_floor = 1e-12 * std::max(normal.diagonal().maxCoeff(), 1e-300);

        // Coordinates resting on a bound with the descent direction pointing
        // outward are held fixed; otherwise projection clips every step.
        std::vector<int> free;
        for (int a = 0; a < dim; ++a) {
            const bool at_lower = theta[a] <= space.lower[a] && gradient[a] > 0.0;
            const bool at_upper = theta[a] >= space.upper[a] && gradient[a] < 0.0;
            if (!at_lower && !at_upper) free.push_back(a);
        }
        if (free.empty()) {
            converged = true;
            break;
        }
        const auto nf = static_cast<Eigen::Index>(free.size());

        bool improved = false;
        while (!improved) {
            Eigen::MatrixXd lhs(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                rhs[a] = -gradient[free[a]];
                for (Eigen::Index b = 0; b < nf; ++b) lhs(a, b) = normal(free[a], free[b]);
                lhs(a, a) += damping * (normal(free[a], free[a]) + diag_floor);
            }
            const Eigen::VectorXd reduced = lhs.ldlt().solve(rhs);
            Eigen::VectorXd step = Eigen::VectorXd::Zero(dim);
            for (Eigen::Index a = 0; a < nf; ++a) step[free[a]] = reduced[a];
            const Eigen::VectorXd candidate = space.project(theta + step);
            const double candidate_cost = weighted_cost(cloud, weights, space, candidate);
            if (std::isfinite(candidate_cost) && candidate_cost < cost) {
                const double moved = (candidate - theta).cwiseAbs().maxCoeff();
                const double decrease = cost - candidate_cost;
                theta = candidate;
                cost = candidate_cost;
                damping = std::max(damping / 10.0, 1e-12);
                improved = true;
                if (moved < options.inner_tolerance || decrease <= kRelativeDecrease * (cost + decrease)) {
                    converged = true;
                }
            } else {
                damping *= 10.0;
                if (damping > 1e12) {
                    // No descent direction left at working precision.
                    converged = true;
                    break;
                }
            }
        }
    }
    fit.params = space.from_log(theta);
    fit.converged = converged;
    fit.inner_iterations = it;
    fit.outer_iterations = 1;
    fit.weighted_rss = cost;
    return fit;
}

VariogramFit fit_irwls(const VariogramCloud& raw_cloud, const IrwlsOptions& options) {
    const VariogramCloud cloud = options.bins > 0 ? bin_cloud(raw_cloud, options.bins) : raw_cloud;
    check_cloud(cloud);
    const std::size_t m = cloud.points.size();
    std::vector<double> weights(m, 1.0);
    VariogramFit fit = fit_weighted(cloud, weights, initial_params(cloud, options.model), options);
    int total_inner = fit.inner_iterations;
    int outer = 1;
    bool outer_converged = options.max_outer <= 1;
    while (outer < options.max_outer) {
        double mean_w = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double g = std::max(model_semivariance(cloud.points[j].distance, fit.params),
                                      1e-12 * model_sill(fit.params));
            weights[j] = options.reweight == ReweightScheme::InverseSquared ? 1.0 / (g * g) : g * g;
            mean_w += weights[j];
        }
        mean_w /= static_cast<double>(m);
        for (double& w : weights) w /= mean_w;

        VariogramFit next = fit_weighted(cloud, weights, fit.params, options);
        ++outer;
        total_inner += next.inner_iterations;
        const double change = std::min(max_relative_change(next.params, fit.params),
                                       max_curve_change(cloud, next.params, fit.params));
        fit = next;
        if (change < options.outer_tolerance) {
            outer_converged = true;
            break;
        }
    }
    fit.outer_iterations = outer;
    fit.inner_iterations = total_inner;
    fit.converged = fit.converged && outer_converged;
    return fit;
}

CovMatrix covariance_matrix(const VariogramParams& params, const DistanceMatrix& d) {
    d.validate();
    const Eigen::Index n = d.entries.rows();
    const double twice_sill = 2.0 * model_sill(params);
    CovMatrix c;
    c.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        c.entries(i, i) = twice_sill;
        for (Eigen::Index k = i + 1; k < n; ++k) {
            const double v = twice_sill - 2.0 * model_semivariance(d.entries(i, k), params);
            c.entries(i, k) = v;
            c.entries(k, i) = v;
        }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.entries, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * hi)) {
        throw NumericalError(
            "covariance matrix is not positive definite (min eigenvalue " + std::to_string(lo) +
                "); Euclideanize the distances first or use nonspatial mode",
            lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
    }
    c.condition = hi / lo;
    return c;
}

Weights blue_weights(const CovMatrix& c) {
    const Eigen::Index n = c.entries.rows();
    if (n == 0 || c.entries.cols() != n) throw ValidationError("covariance matrix must be square and non-empty");
    double condition = c.condition;
    if (!(condition > 0.0)) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.entries, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    }
    if (!(condition <= kMaxCondition)) {
        throw NumericalError("covariance matrix is ill-conditioned (condition estimate " +
                                 std::to_string(condition) + ")",
                             condition);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(c.entries);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("covariance matrix is not positive definite", condition);
    }
    const Eigen::VectorXd x = llt.solve(Eigen::VectorXd::Ones(n));
    const double total = x.sum();
    Weights w;
    w.condition = condition;
    w.values.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) w.values[i] = x[i] / total;
    return w;
}

}  // namespace slva
