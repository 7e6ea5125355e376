#include "slva/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "slva/error.hpp"

namespace slva {
namespace {

void require_same_grid(const MonotoneMap& a, const MonotoneMap& b) {
    if (a.grid_size() != b.grid_size()) {
        throw ValidationError("monotone maps live on different grids (" +
                              std::to_string(a.grid_size()) + " vs " +
                              std::to_string(b.grid_size()) + ")");
    }
}

// Blend with the identity and pin the endpoints; input must be nondecreasing in [0,1].
std::vector<double> ridge_and_pin(std::vector<double> values) {
    const std::size_t n = values.size();
    const double h = 1.0 / static_cast<double>(n - 1);
    for (std::size_t g = 0; g < n; ++g) {
        values[g] = (1.0 - kStrictnessRidge) * values[g] + kStrictnessRidge * (g * h);
    }
    values.front() = 0.0;
    values.back() = 1.0;
    return values;
}

}  // namespace

MonotoneMap::MonotoneMap(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw ValidationError("monotone map needs at least 2 grid points");
    if (values_.front() != 0.0 || values_.back() != 1.0) {
        throw ValidationError("monotone map endpoints must be pinned to 0 and 1");
    }
    for (std::size_t g = 1; g < values_.size(); ++g) {
        if (!(values_[g] > values_[g - 1]) || !std::isfinite(values_[g])) {
            throw ValidationError("monotone map not strictly increasing at grid index " +
                                  std::to_string(g));
        }
    }
}

MonotoneMap MonotoneMap::identity(int grid_size) {
    if (grid_size < 2) throw ValidationError("grid size must be at least 2");
    std::vector<double> v(grid_size);
    for (int g = 0; g < grid_size; ++g) v[g] = static_cast<double>(g) / (grid_size - 1);
    v.back() = 1.0;
    return MonotoneMap(std::move(v));
}

MonotoneMap MonotoneMap::from_function(const std::function<double(double)>& f, int grid_size) {
    if (grid_size < 2) throw ValidationError("grid size must be at least 2");
    std::vector<double> v(grid_size);
    for (int g = 0; g < grid_size; ++g) v[g] = f(static_cast<double>(g) / (grid_size - 1));
    v.front() = 0.0;
    v.back() = 1.0;
    return MonotoneMap(std::move(v));
}

double MonotoneMap::operator()(double t) const {
    const std::size_t last = values_.size() - 1;
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double pos = t * static_cast<double>(last);
    const std::size_t i = std::min(static_cast<std::size_t>(pos), last - 1);
    // On a segment lying on the diagonal the interpolant is t itself; skipping
    // the arithmetic keeps identity stretches exact.
    if (values_[i] == grid_point(static_cast<int>(i)) && values_[i + 1] == grid_point(static_cast<int>(i + 1))) {
        return t;
    }
    const double frac = pos - static_cast<double>(i);
    return values_[i] + frac * (values_[i + 1] - values_[i]);
}

MonotoneMap local_variation(std::span<const double> derivative_on_grid) {
    const std::size_t n = derivative_on_grid.size();
    if (n < 2) throw ValidationError("local variation needs at least 2 grid points");
    std::vector<double> cumulative(n, 0.0);
    for (std::size_t g = 1; g < n; ++g) {
        const double a = std::abs(derivative_on_grid[g - 1]);
        const double b = std::abs(derivative_on_grid[g]);
        if (!std::isfinite(a) || !std::isfinite(b)) {
            throw ValidationError("non-finite derivative sample");
        }
        cumulative[g] = cumulative[g - 1] + 0.5 * (a + b);
    }
    const double total = cumulative.back();
    if (!(total > 0.0)) {
        throw DegenerateInputError("curve has zero total variation; local variation undefined");
    }
    for (double& c : cumulative) c /= total;
    return MonotoneMap(ridge_and_pin(std::move(cumulative)));
}

MonotoneMap local_variation(const SmoothCurve& derivative_curve, int grid_size) {
    return local_variation(derivative_curve.sample(grid_size));
}

MonotoneMap invert(const MonotoneMap& m) {
    const auto& v = m.values();
    const std::size_t n = v.size();
    const double h = 1.0 / static_cast<double>(n - 1);
    std::vector<double> out(n);
    out.front() = 0.0;
    out.back() = 1.0;
    std::size_t j = 0;
    for (std::size_t g = 1; g + 1 < n; ++g) {
        const double s = static_cast<double>(g) * h;
        while (j + 2 < n && v[j + 1] <= s) ++j;
        const double frac = (s - v[j]) / (v[j + 1] - v[j]);
        out[g] = (static_cast<double>(j) + frac) * h;
    }
    return MonotoneMap(std::move(out));
}

MonotoneMap compose(const MonotoneMap& outer, const MonotoneMap& inner) {
    const auto& in = inner.values();
    std::vector<double> out(in.size());
    for (std::size_t g = 0; g < in.size(); ++g) out[g] = outer(in[g]);
    out.front() = 0.0;
    out.back() = 1.0;
    return MonotoneMap(std::move(out));
}

std::vector<double> inverse_at(const MonotoneMap& m, std::span<const double> points) {
    const auto& v = m.values();
    const std::size_t n = v.size();
    const double last = static_cast<double>(n - 1);
    std::vector<double> out(points.size());
    std::size_t j = 0;
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < points.size(); ++p) {
        const double s = points[p];
        if (!(s >= previous)) throw ValidationError("inverse_at needs nondecreasing points");
        previous = s;
        if (s <= 0.0) {
            out[p] = 0.0;
            continue;
        }
        if (s >= 1.0) {
            out[p] = 1.0;
            continue;
        }
        while (j + 2 < n && v[j + 1] <= s) ++j;
        const double frac = (s - v[j]) / (v[j + 1] - v[j]);
        out[p] = (static_cast<double>(j) + frac) / last;
    }
    return out;
}

std::vector<double> isotonic_regression(std::span<const double> values) {
    // Blocks of (mean, weight) merged while they violate monotonicity.
    std::vector<double> means;
    std::vector<double> weights;
    std::vector<std::size_t> sizes;
    for (double v : values) {
        means.push_back(v);
        weights.push_back(1.0);
        sizes.push_back(1);
        while (means.size() > 1 && means[means.size() - 2] > means.back()) {
            const std::size_t k = means.size() - 1;
            const double w = weights[k - 1] + weights[k];
            means[k - 1] = (weights[k - 1] * means[k - 1] + weights[k] * means[k]) / w;
            weights[k - 1] = w;
            sizes[k - 1] += sizes[k];
            means.pop_back();
            weights.pop_back();
            sizes.pop_back();
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (std::size_t b = 0; b < means.size(); ++b) out.insert(out.end(), sizes[b], means[b]);
    return out;
}

WeightedMeanResult weighted_mean(std::span<const MonotoneMap> maps, std::span<const double> weights) {
    if (maps.empty()) throw ValidationError("weighted mean needs at least one map");
    if (maps.size() != weights.size()) {
        throw ValidationError("weighted mean: " + std::to_string(maps.size()) + " maps but " +
                              std::to_string(weights.size()) + " weights");
    }
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(std::abs(total - 1.0) <= 1e-10)) {
        throw ValidationError("weights must sum to 1 (got " + std::to_string(total) + ")");
    }
    const int n = maps.front().grid_size();
    for (const auto& m : maps) require_same_grid(maps.front(), m);

    std::vector<double> sum(n, 0.0);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto& v = maps[i].values();
        for (int g = 0; g < n; ++g) sum[g] += weights[i] * v[g];
    }
    sum.front() = 0.0;
    sum.back() = 1.0;
    bool increasing = true;
    for (int g = 1; g < n; ++g) {
        if (!(sum[g] > sum[g - 1])) {
            increasing = false;
            break;
        }
    }
    if (increasing) return {MonotoneMap(std::move(sum)), false};

    std::vector<double> projected = isotonic_regression(sum);
    for (double& v : projected) v = std::clamp(v, 0.0, 1.0);
    return {MonotoneMap(ridge_and_pin(std::move(projected))), true};
}

double displacement(const MonotoneMap& h_inv) {
    const auto& v = h_inv.values();
    const std::size_t n = v.size();
    const double h = 1.0 / static_cast<double>(n - 1);
    double mean = 0.0;
    for (std::size_t g = 0; g + 1 < n; ++g) mean += (static_cast<double>(g) + 0.5) * h * (v[g + 1] - v[g]);
    return mean - 0.5;
}

double stretch(const MonotoneMap& h_inv) {
    const auto& v = h_inv.values();
    const std::size_t n = v.size();
    const double h = 1.0 / static_cast<double>(n - 1);
    const double centre = displacement(h_inv) + 0.5;
    // Exact second moment of the piecewise-uniform density within each cell.
    double variance = 0.0;
    for (std::size_t g = 0; g + 1 < n; ++g) {
        const double d = (static_cast<double>(g) + 0.5) * h - centre;
        variance += (v[g + 1] - v[g]) * (d * d + h * h / 12.0);
    }
    return std::log(12.0 * variance);
}

PhaseFunctionals phase_functionals(const MonotoneMap& h_inv) {
    return {displacement(h_inv), stretch(h_inv)};
}

double squared_l2_distance(const MonotoneMap& a, const MonotoneMap& b) {
    require_same_grid(a, b);
    std::vector<double> sq(a.grid_size());
    for (int g = 0; g < a.grid_size(); ++g) {
        const double d = a.values()[g] - b.values()[g];
        sq[g] = d * d;
    }
    return trapezoid(sq);
}

}  // namespace slva
