#pragma once

#include <functional>
#include <span>
#include <vector>

#include "slva/curve_smoothing.hpp"

namespace slva {

inline constexpr int kDefaultGridSize = 1001;

/// Strictly increasing map [0,1] -> [0,1] with pinned endpoints, stored on a
/// uniform grid and linearly interpolated in between.
///
/// Holds warps, their inverses and local-variation distributions alike.
class MonotoneMap {
public:
    /// Validates strict monotonicity and exact endpoint pinning.
    explicit MonotoneMap(std::vector<double> values);

    static MonotoneMap identity(int grid_size = kDefaultGridSize);
    /// Samples `f` on the grid; f must be strictly increasing with f(0)=0, f(1)=1.
    static MonotoneMap from_function(const std::function<double(double)>& f,
                                     int grid_size = kDefaultGridSize);

    double operator()(double t) const;
    int grid_size() const noexcept { return static_cast<int>(values_.size()); }
    double grid_point(int g) const noexcept {
        return static_cast<double>(g) / static_cast<double>(values_.size() - 1);
    }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> values_;
};

struct PhaseFunctionals {
    double displacement = 0.0;  // mean of the warp-as-CDF minus 1/2
    double stretch = 0.0;       // log(12 * variance of the warp-as-CDF)
};

/// Weight used to blend the raw local-variation distribution with the identity
/// so that flat stretches of the curve still give a strictly increasing map.
inline constexpr double kStrictnessRidge = 1e-9;

/// Normalized cumulative |Df| from the derivative sampled on the uniform grid.
MonotoneMap local_variation(std::span<const double> derivative_on_grid);

/// Normalized cumulative |Df| of a fitted derivative curve.
MonotoneMap local_variation(const SmoothCurve& derivative_curve, int grid_size = kDefaultGridSize);

/// Piecewise-linear inverse resampled on the same grid.
MonotoneMap invert(const MonotoneMap& m);

/// outer(inner(t)) on inner's grid.
MonotoneMap compose(const MonotoneMap& outer, const MonotoneMap& inner);

/// Exact inverse of m's piecewise-linear interpolant at nondecreasing points.
std::vector<double> inverse_at(const MonotoneMap& m, std::span<const double> points);

struct WeightedMeanResult {
    MonotoneMap map;
    /// True when the raw weighted sum was not increasing and was projected.
    bool projected = false;
};

/// Pointwise weighted sum. Weights must sum to 1 within 1e-10 and may be
/// negative; a non-increasing result is isotonically projected (PAVA),
/// ridged like local_variation and re-pinned.
WeightedMeanResult weighted_mean(std::span<const MonotoneMap> maps, std::span<const double> weights);

/// Stieltjes integral of t against h_inv minus 1/2.
double displacement(const MonotoneMap& h_inv);

/// log(12 * variance) of the distribution with CDF h_inv.
double stretch(const MonotoneMap& h_inv);

PhaseFunctionals phase_functionals(const MonotoneMap& h_inv);

/// Pool-adjacent-violators least-squares nondecreasing fit.
std::vector<double> isotonic_regression(std::span<const double> values);

/// Trapezoid quadrature of (a - b)^2 over [0,1] on the shared grid.
double squared_l2_distance(const MonotoneMap& a, const MonotoneMap& b);

}  // namespace slva
