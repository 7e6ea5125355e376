#include "slva/curve_smoothing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <boost/math/tools/minima.hpp>

#include "slva/error.hpp"

namespace slva {
namespace {

constexpr int kMaxOrder = 8;

// Index of the knot span containing t for a clamped knot vector with
// `num_coef` coefficients and the given order.
int find_span(const std::vector<double>& knots, int num_coef, int order, double t) {
    const int degree = order - 1;
    if (t >= knots[num_coef]) return num_coef - 1;
    if (t <= knots[degree]) return degree;
    int low = degree;
    int high = num_coef;
    int mid = (low + high) / 2;
    while (t < knots[mid] || t >= knots[mid + 1]) {
        if (t < knots[mid]) {
            high = mid;
        } else {
            low = mid;
        }
        mid = (low + high) / 2;
    }
    return mid;
}

// Nonzero basis values N_{span-degree..span} at t (Cox-de Boor, triangular scheme).
void basis_values(const std::vector<double>& knots, int span, int order, double t,
                  std::array<double, kMaxOrder>& out) {
    const int degree = order - 1;
    std::array<double, kMaxOrder> left{};
    std::array<double, kMaxOrder> right{};
    out[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double temp = denom != 0.0 ? out[r] / denom : 0.0;
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

// Basis values and derivatives up to `nd` at t; ders[k][j] is the k-th
// derivative of N_{span-degree+j}.
std::vector<std::vector<double>> basis_derivatives(const std::vector<double>& knots, int span,
                                                   int order, double t, int nd) {
    const int degree = order - 1;
    std::vector<std::vector<double>> ndu(degree + 1, std::vector<double>(degree + 1, 0.0));
    std::vector<double> left(degree + 1, 0.0);
    std::vector<double> right(degree + 1, 0.0);
    ndu[0][0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    std::vector<std::vector<double>> ders(nd + 1, std::vector<double>(degree + 1, 0.0));
    for (int j = 0; j <= degree; ++j) ders[0][j] = ndu[j][degree];

    const int top = std::min(nd, degree);
    std::vector<std::vector<double>> a(2, std::vector<double>(degree + 1, 0.0));
    for (int r = 0; r <= degree; ++r) {
        int s1 = 0;
        int s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= top; ++k) {
            double d = 0.0;
            const int rk = r - k;
            const int pk = degree - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : degree - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = degree;
    for (int k = 1; k <= top; ++k) {
        for (int j = 0; j <= degree; ++j) ders[k][j] *= factor;
        factor *= (degree - k);
    }
    return ders;
}

// Gauss-Legendre nodes and weights on [-1, 1], 4 points.
constexpr std::array<double, 4> kGaussNodes{-0.8611363115940526, -0.3399810435848563,
                                            0.3399810435848563, 0.8611363115940526};
constexpr std::array<double, 4> kGaussWeights{0.3478548451374538, 0.6521451548625461,
                                              0.6521451548625461, 0.3478548451374538};

void check_times(std::span<const double> times) {
    if (times.size() < 10) {
        throw ValidationError("curve needs at least 10 observations, got " +
                              std::to_string(times.size()));
    }
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (!std::isfinite(times[j]) || times[j] < 0.0 || times[j] > 1.0) {
            throw ValidationError("observation time outside [0,1] at index " + std::to_string(j));
        }
        if (j > 0 && !(times[j] > times[j - 1])) {
            throw ValidationError("observation times must be strictly increasing (index " +
                                  std::to_string(j) + ")");
        }
    }
}

std::size_t count_distinct(std::span<const double> times) {
    std::vector<double> sorted(times.begin(), times.end());
    std::sort(sorted.begin(), sorted.end());
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

}  // namespace

void SampledCurve::validate() const {
    if (times.size() != values.size()) {
        throw ValidationError("curve '" + location_id + "': times and values differ in length");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw ValidationError("curve '" + location_id + "': non-finite value");
        }
    }
    check_times(times);
}

// ---------------------------------------------------------------------------
// SmoothCurve

SmoothCurve::SmoothCurve(std::vector<double> knots, Eigen::VectorXd coefficients, int order,
                         PenaltyOrder penalty, double smoothing)
    : knots_(std::move(knots)),
      coefficients_(std::move(coefficients)),
      order_(order),
      penalty_(penalty),
      smoothing_(smoothing) {
    if (order_ < 1 || order_ > kMaxOrder) {
        throw ValidationError("spline order out of range");
    }
    if (static_cast<Eigen::Index>(knots_.size()) != coefficients_.size() + order_) {
        throw ValidationError("knot vector length must equal coefficients + order");
    }
}

double SmoothCurve::value(double t) const {
    const int num_coef = static_cast<int>(coefficients_.size());
    t = std::clamp(t, knots_[order_ - 1], knots_[num_coef]);
    const int span = find_span(knots_, num_coef, order_, t);
    std::array<double, kMaxOrder> basis{};
    basis_values(knots_, span, order_, t, basis);
    double sum = 0.0;
    for (int j = 0; j < order_; ++j) sum += basis[j] * coefficients_[span - order_ + 1 + j];
    return sum;
}

double SmoothCurve::slope(double t) const { return derivative().value(t); }

SmoothCurve SmoothCurve::derivative() const {
    if (order_ < 2) throw ValidationError("cannot differentiate a piecewise-constant spline");
    const int num_coef = static_cast<int>(coefficients_.size());
    const int k = order_;
    Eigen::VectorXd d(num_coef - 1);
    for (int i = 0; i + 1 < num_coef; ++i) {
        const double span = knots_[i + k] - knots_[i + 1];
        d[i] = span > 0.0 ? (k - 1) * (coefficients_[i + 1] - coefficients_[i]) / span : 0.0;
    }
    std::vector<double> knots(knots_.begin() + 1, knots_.end() - 1);
    return SmoothCurve(std::move(knots), std::move(d), k - 1, penalty_, smoothing_);
}

std::vector<double> SmoothCurve::sample(int grid_size) const {
    if (grid_size < 2) throw ValidationError("grid size must be at least 2");
    std::vector<double> out(grid_size);
    const int num_coef = static_cast<int>(coefficients_.size());
    std::array<double, kMaxOrder> basis{};
    for (int g = 0; g < grid_size; ++g) {
        const double t = std::clamp(static_cast<double>(g) / (grid_size - 1), knots_[order_ - 1],
                                    knots_[num_coef]);
        const int span = find_span(knots_, num_coef, order_, t);
        basis_values(knots_, span, order_, t, basis);
        double sum = 0.0;
        for (int j = 0; j < order_; ++j) sum += basis[j] * coefficients_[span - order_ + 1 + j];
        out[g] = sum;
    }
    return out;
}

SmoothCurve SmoothCurve::scaled(double factor) const {
    return SmoothCurve(knots_, coefficients_ * factor, order_, penalty_, smoothing_);
}

// ---------------------------------------------------------------------------
// SplineSmoother

SplineSmoother::SplineSmoother(std::span<const double> times, PenaltyOrder penalty)
    : times_(times.begin(), times.end()), penalty_(penalty), order_(2 * static_cast<int>(penalty)) {
    const int q = static_cast<int>(penalty_);
    if (count_distinct(times) < static_cast<std::size_t>(q + 2)) {
        throw DegenerateInputError("smoothing spline of penalty order " + std::to_string(q) +
                                   " needs at least " + std::to_string(q + 2) +
                                   " distinct time points");
    }
    check_times(times);

    knots_.assign(order_, 0.0);
    for (double t : times_) {
        if (t > 0.0 && t < 1.0) knots_.push_back(t);
    }
    knots_.insert(knots_.end(), order_, 1.0);
    const int num_coef = static_cast<int>(knots_.size()) - order_;
    const int m = static_cast<int>(times_.size());

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(m, num_coef);
    std::array<double, kMaxOrder> basis{};
    for (int i = 0; i < m; ++i) {
        const int span = find_span(knots_, num_coef, order_, times_[i]);
        basis_values(knots_, span, order_, times_[i], basis);
        for (int j = 0; j < order_; ++j) design(i, span - order_ + 1 + j) = basis[j];
    }

    Eigen::MatrixXd penalty_matrix = Eigen::MatrixXd::Zero(num_coef, num_coef);
    for (int span = order_ - 1; span < num_coef; ++span) {
        const double a = knots_[span];
        const double b = knots_[span + 1];
        if (!(b > a)) continue;
        const double half = 0.5 * (b - a);
        for (std::size_t g = 0; g < kGaussNodes.size(); ++g) {
            const double t = a + half * (kGaussNodes[g] + 1.0);
            const auto ders = basis_derivatives(knots_, span, order_, t, q);
            const double w = half * kGaussWeights[g];
            for (int r = 0; r < order_; ++r) {
                for (int c = 0; c < order_; ++c) {
                    penalty_matrix(span - order_ + 1 + r, span - order_ + 1 + c) +=
                        w * ders[q][r] * ders[q][c];
                }
            }
        }
    }

    const Eigen::MatrixXd cross = design.transpose() * design;
    lambda_scale_ = cross.trace() / penalty_matrix.trace();

    // Simultaneous diagonalization of B'B and Omega through G = B'B + s*Omega.
    const Eigen::MatrixXd combined = cross + lambda_scale_ * penalty_matrix;
    const Eigen::LLT<Eigen::MatrixXd> llt(combined);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("spline normal matrix is not positive definite");
    }
    const auto lower = llt.matrixL();
    const Eigen::MatrixXd half_rotated = lower.solve(penalty_matrix);
    Eigen::MatrixXd rotated_penalty = lower.solve(half_rotated.transpose());
    rotated_penalty = 0.5 * (rotated_penalty + rotated_penalty.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rotated_penalty);
    if (eig.info() != Eigen::Success) throw NumericalError("penalty eigendecomposition failed");

    transform_ = llt.matrixU().solve(eig.eigenvectors());
    design_ = design * transform_;
    gram_diag_ = design_.colwise().squaredNorm().transpose();
    pen_diag_ = eig.eigenvalues().cwiseMax(0.0);

    // Rank of B is m under Schoenberg-Whitney; keep the m directions the data see.
    std::vector<int> order(num_coef);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return gram_diag_[a] > gram_diag_[b]; });
    visible_dirs_.assign(order.begin(), order.begin() + std::min(m, num_coef));
    // Among those, the q least penalized span the polynomial null space.
    std::vector<int> by_ratio = visible_dirs_;
    std::sort(by_ratio.begin(), by_ratio.end(), [&](int a, int b) {
        return pen_diag_[a] / gram_diag_[a] < pen_diag_[b] / gram_diag_[b];
    });
    random_dirs_.assign(by_ratio.begin() + q, by_ratio.end());
    // Their eigenvalues are zero up to rounding; large smoothing would amplify the residue.
    for (int i = 0; i < q; ++i) pen_diag_[by_ratio[i]] = 0.0;
    std::sort(visible_dirs_.begin(), visible_dirs_.end());
    std::sort(random_dirs_.begin(), random_dirs_.end());
}

Eigen::VectorXd SplineSmoother::rotated_response(std::span<const double> values) const {
    if (values.size() != times_.size()) {
        throw ValidationError("value count does not match the smoother's time grid");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("non-finite value passed to smoother");
    }
    const Eigen::Map<const Eigen::VectorXd> y(values.data(), static_cast<Eigen::Index>(values.size()));
    return design_.transpose() * y;
}

Eigen::VectorXd SplineSmoother::coefficients_for(const Eigen::VectorXd& rotated, double lambda) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(rotated.size());
    for (int k : visible_dirs_) a[k] = rotated[k] / (gram_diag_[k] + lambda * pen_diag_[k]);
    return transform_ * a;
}

double SplineSmoother::reml_criterion(std::span<const double> values, double log_relative) const {
    const Eigen::VectorXd rotated = rotated_response(values);
    const Eigen::Map<const Eigen::VectorXd> y(values.data(), static_cast<Eigen::Index>(values.size()));
    const double lambda = lambda_scale_ * std::exp(log_relative);

    double explained = 0.0;
    for (int k : visible_dirs_) explained += rotated[k] * rotated[k] / gram_diag_[k];
    double penalized = std::max(0.0, y.squaredNorm() - explained);
    double log_det = 0.0;
    for (int k : random_dirs_) {
        const double z2 = rotated[k] * rotated[k] / gram_diag_[k];
        const double w = lambda * pen_diag_[k] / gram_diag_[k];
        penalized += z2 * w / (1.0 + w);
        log_det += std::log1p(1.0 / w);
    }
    penalized = std::max(penalized, 1e-30 * y.squaredNorm() + 1e-300);
    const double dof = static_cast<double>(times_.size()) - static_cast<int>(penalty_);
    return dof * std::log(penalized) + log_det;
}

double SplineSmoother::select_smoothing(std::span<const double> values) const {
    // Coarse scan guards against local optima; Brent refines the best bracket.
    constexpr double kStep = 0.5;
    double best_x = kLogLower;
    double best_v = reml_criterion(values, best_x);
    for (double x = kLogLower + kStep; x <= kLogUpper + 1e-12; x += kStep) {
        const double v = reml_criterion(values, x);
        if (v < best_v) {
            best_v = v;
            best_x = x;
        }
    }
    const double lo = std::max(kLogLower, best_x - kStep);
    const double hi = std::min(kLogUpper, best_x + kStep);
    auto objective = [&](double x) { return reml_criterion(values, x); };
    // 20 bits gives a bracket tolerance of about 1e-6 on the log scale.
    const auto [x_min, v_min] = boost::math::tools::brent_find_minima(objective, lo, hi, 20);
    const double chosen = v_min <= best_v ? x_min : best_x;
    return lambda_scale_ * std::exp(chosen);
}

SmoothCurve SplineSmoother::fit(std::span<const double> values, std::optional<double> smoothing) const {
    const double lambda = smoothing ? *smoothing : select_smoothing(values);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("smoothing parameter must be finite and nonnegative");
    }
    const Eigen::VectorXd coef = coefficients_for(rotated_response(values), lambda);
    return SmoothCurve(knots_, coef, order_, penalty_, lambda);
}

double SplineSmoother::residual_sum_of_squares(std::span<const double> values, double smoothing) const {
    const Eigen::VectorXd rotated = rotated_response(values);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(rotated.size());
    for (int k : visible_dirs_) a[k] = rotated[k] / (gram_diag_[k] + smoothing * pen_diag_[k]);
    const Eigen::Map<const Eigen::VectorXd> y(values.data(), static_cast<Eigen::Index>(values.size()));
    return (y - design_ * a).squaredNorm();
}

// ---------------------------------------------------------------------------

SmoothCurve fit_smoothing_spline(const SampledCurve& samples, PenaltyOrder penalty) {
    if (samples.times.size() != samples.values.size()) {
        throw ValidationError("curve '" + samples.location_id + "': times and values differ in length");
    }
    for (double v : samples.values) {
        if (!std::isfinite(v)) throw ValidationError("curve '" + samples.location_id + "': non-finite value");
    }
    const SplineSmoother smoother(samples.times, penalty);
    return smoother.fit(samples.values);
}

SmoothCurve derivative(const SmoothCurve& curve) { return curve.derivative(); }

double trapezoid(std::span<const double> grid_values) {
    const std::size_t n = grid_values.size();
    if (n < 2) throw ValidationError("quadrature grid needs at least 2 points");
    double sum = 0.5 * (grid_values.front() + grid_values.back());
    for (std::size_t i = 1; i + 1 < n; ++i) sum += grid_values[i];
    return sum / static_cast<double>(n - 1);
}

SmoothCurve l2_normalize(const SmoothCurve& curve, int grid_size) {
    std::vector<double> sq = curve.sample(grid_size);
    for (double& v : sq) v *= v;
    const double norm2 = trapezoid(sq);
    if (!(norm2 > 0.0)) throw DegenerateInputError("cannot normalize a curve with zero L2 norm");
    return curve.scaled(1.0 / std::sqrt(norm2));
}

std::vector<double> l2_normalize(std::span<const double> grid_values) {
    std::vector<double> sq(grid_values.begin(), grid_values.end());
    for (double& v : sq) v *= v;
    const double norm2 = trapezoid(sq);
    if (!(norm2 > 0.0)) throw DegenerateInputError("cannot normalize a curve with zero L2 norm");
    const double inv = 1.0 / std::sqrt(norm2);
    std::vector<double> out(grid_values.begin(), grid_values.end());
    for (double& v : out) v *= inv;
    return out;
}

}  // namespace slva
