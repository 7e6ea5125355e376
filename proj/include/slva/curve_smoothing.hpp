#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace slva {

/// One location's discrete time series on [0,1].
struct SampledCurve {
    std::string location_id;
    std::vector<double> times;
    std::vector<double> values;

    /// Throws ValidationError unless there are at least 10 strictly increasing
    /// times in [0,1] with one finite value each.
    void validate() const;
};

enum class PenaltyOrder : int {
    Cubic = 2,    // penalize (D^2 f)^2, cubic spline
    Quintic = 3,  // penalize (D^3 f)^2, quintic spline
};

/// Piecewise polynomial on [0,1] held in B-spline form.
///
/// Immutable once built. `order` is the B-spline order (degree + 1).
class SmoothCurve {
public:
    SmoothCurve(std::vector<double> knots, Eigen::VectorXd coefficients, int order,
                PenaltyOrder penalty = PenaltyOrder::Cubic, double smoothing = 0.0);

    double operator()(double t) const { return value(t); }
    double value(double t) const;
    /// First derivative, evaluated through the analytic derivative spline.
    double slope(double t) const;

    /// Exact derivative as a spline of one lower order.
    SmoothCurve derivative() const;

    /// Values on the uniform grid of `grid_size` points over [0,1].
    std::vector<double> sample(int grid_size) const;

    int order() const noexcept { return order_; }
    PenaltyOrder penalty_order() const noexcept { return penalty_; }
    double smoothing() const noexcept { return smoothing_; }
    const std::vector<double>& knots() const noexcept { return knots_; }
    const Eigen::VectorXd& coefficients() const noexcept { return coefficients_; }

    SmoothCurve scaled(double factor) const;

private:
    std::vector<double> knots_;
    Eigen::VectorXd coefficients_;
    int order_;
    PenaltyOrder penalty_;
    double smoothing_;
};

/// Penalized spline smoother for one fixed set of observation times.
///
/// The expensive part (basis, penalty, Demmler-Reinsch rotation) depends only
/// on the times, so curves sharing a time grid reuse one smoother. Knots sit
/// at the observation times with clamped boundary knots at 0 and 1, which
/// makes the natural-spline minimizer of the penalized criterion an element
/// of the basis span. For the quintic case this is a polynomial-order-6
/// penalized spline standing in for the C^4 minimizer.
///
/// The smoothing parameter is selected by REML under homoscedastic
/// independent noise. The search runs over the natural log of
/// lambda / lambda_scale on [-20, 20], where lambda_scale = tr(B'B)/tr(Omega)
/// makes the window independent of the time units and penalty order.
class SplineSmoother {
public:
    SplineSmoother(std::span<const double> times, PenaltyOrder penalty);

    /// Fit with REML-selected smoothing, or with `smoothing` (absolute
    /// lambda) when given.
    SmoothCurve fit(std::span<const double> values,
                    std::optional<double> smoothing = std::nullopt) const;

    /// REML smoothing for the given values (absolute lambda).
    double select_smoothing(std::span<const double> values) const;

    /// Profiled REML criterion (up to constants) at log(lambda / scale).
    double reml_criterion(std::span<const double> values, double log_relative) const;

    /// Residual sum of squares at the data for a given absolute lambda.
    double residual_sum_of_squares(std::span<const double> values, double smoothing) const;

    double lambda_scale() const noexcept { return lambda_scale_; }
    PenaltyOrder penalty_order() const noexcept { return penalty_; }
    std::size_t size() const noexcept { return times_.size(); }

    static constexpr double kLogLower = -20.0;
    static constexpr double kLogUpper = 20.0;

private:
    Eigen::VectorXd rotated_response(std::span<const double> values) const;
    Eigen::VectorXd coefficients_for(const Eigen::VectorXd& rotated, double lambda) const;

    std::vector<double> times_;
    PenaltyOrder penalty_;
    int order_;
    std::vector<double> knots_;
    Eigen::MatrixXd design_;     // m x p
    Eigen::MatrixXd transform_;  // p x p, coefficients = transform * rotated coords
    Eigen::VectorXd gram_diag_;  // e_k, diagonal of the rotated B'B
    Eigen::VectorXd pen_diag_;   // mu_k, diagonal of the rotated penalty
    std::vector<int> random_dirs_;  // data-visible, penalized directions
    std::vector<int> visible_dirs_;
    double lambda_scale_;
};

/// Convenience wrapper: validate, build a smoother and fit with REML.
SmoothCurve fit_smoothing_spline(const SampledCurve& samples, PenaltyOrder penalty);

/// Analytic derivative (same as curve.derivative()).
SmoothCurve derivative(const SmoothCurve& curve);

/// Rescale so that the trapezoid integral of f^2 over [0,1] equals 1.
SmoothCurve l2_normalize(const SmoothCurve& curve, int grid_size = 1001);

/// Grid version used for aligned curves.
std::vector<double> l2_normalize(std::span<const double> grid_values);

/// Composite trapezoid rule over a uniform grid on [0,1].
double trapezoid(std::span<const double> grid_values);

}  // namespace slva
