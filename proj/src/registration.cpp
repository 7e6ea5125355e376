#include "slva/registration.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "slva/error.hpp"
#include "slva/parallel.hpp"

namespace slva {
namespace {

bool exchangeable(const DistanceMatrix& d) {
    const Eigen::Index n = d.entries.rows();
    if (n < 2) return true;
    const double ref = d.entries(0, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            if (std::abs(d.entries(i, k) - ref) > 1e-12 * std::max(1.0, std::abs(ref))) return false;
        }
    }
    return true;
}

std::vector<double> uniform(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

DistanceMatrix matched_distances(const DistanceMatrix& d, const std::vector<std::string>& ids) {
    const std::set<std::string> wanted(ids.begin(), ids.end());
    std::string extra;
    for (const auto& id : d.ids) {
        if (!wanted.count(id)) extra += (extra.empty() ? "" : ", ") + id;
    }
    if (!extra.empty()) throw ValidationError("ids in distance matrix without curves: " + extra);
    return d.reordered(ids);
}

// Sum_k w_k Lambda_k^{-1}(Lambda_i(t)) with each inverse evaluated exactly rather
// than through its grid resampling, which loses several cells where Lambda is flat.
std::optional<MonotoneMap> exact_inverse_warp(const std::vector<MonotoneMap>& lv, const std::vector<double>& weights,
                                              std::size_t i) {
    const auto& points = lv[i].values();
    std::vector<double> sum(points.size(), 0.0);
    for (std::size_t k = 0; k < lv.size(); ++k) {
        const std::vector<double> back = inverse_at(lv[k], points);
        for (std::size_t g = 0; g < sum.size(); ++g) sum[g] += weights[k] * back[g];
    }
    sum.front() = 0.0;
    sum.back() = 1.0;
    for (std::size_t g = 1; g < sum.size(); ++g) {
        // Rounding in a near-flat stretch can tie neighbours; the grid path is always valid.
        if (!(sum[g] > sum[g - 1])) return std::nullopt;
    }
    return MonotoneMap(std::move(sum));
}

}  // namespace

TimeAxis common_time_axis(std::span<const SampledCurve> raw) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& c : raw) {
        for (double t : c.times) {
            if (!std::isfinite(t)) throw ValidationError("non-finite time in curve '" + c.location_id + "'");
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
    }
    if (!(hi > lo)) throw ValidationError("time axis has zero length");
    return {lo, hi};
}

std::vector<SampledCurve> rescale_times(std::span<const SampledCurve> raw, const TimeAxis& axis) {
    std::vector<SampledCurve> out(raw.begin(), raw.end());
    for (auto& c : out) {
        for (double& t : c.times) {
            t = t == axis.start ? 0.0 : (t == axis.end ? 1.0 : std::clamp(axis.to_unit(t), 0.0, 1.0));
        }
    }
    return out;
}

LocalVariationSet prepare_local_variation(std::span<const SampledCurve> curves,
                                          const RegistrationOptions& options) {
    const std::size_t n = curves.size();
    if (n < 3) throw ValidationError("registration needs at least 3 curves");
    std::set<std::string> seen;
    for (const auto& c : curves) {
        c.validate();
        if (!seen.insert(c.location_id).second) {
            throw ValidationError("duplicate location id '" + c.location_id + "'");
        }
    }

    // Curves observed on the same times share one smoother.
    std::map<std::vector<double>, std::size_t> grid_index;
    std::vector<std::size_t> grid_of(n);
    std::vector<std::vector<double>> grids;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = grid_index.emplace(curves[i].times, grids.size());
        if (inserted) grids.push_back(curves[i].times);
        grid_of[i] = it->second;
    }
    std::vector<std::unique_ptr<SplineSmoother>> quintic(grids.size());
    std::vector<std::unique_ptr<SplineSmoother>> cubic(grids.size());
    for (std::size_t g = 0; g < grids.size(); ++g) {
        quintic[g] = std::make_unique<SplineSmoother>(grids[g], PenaltyOrder::Quintic);
        if (options.compute_aligned) cubic[g] = std::make_unique<SplineSmoother>(grids[g], PenaltyOrder::Cubic);
    }

    std::vector<std::optional<MonotoneMap>> lv(n);
    std::vector<std::optional<MonotoneMap>> lv_inv(n);
    std::vector<std::optional<SmoothCurve>> fits(n);
    std::vector<double> smoothing(n, 0.0);
    parallel_for(
        n,
        [&](std::size_t i) {
            const SmoothCurve quintic_fit = quintic[grid_of[i]]->fit(curves[i].values);
            smoothing[i] = quintic_fit.smoothing();
            lv[i] = local_variation(quintic_fit.derivative(), options.grid_size);
            lv_inv[i] = invert(*lv[i]);
            if (options.compute_aligned) fits[i] = cubic[grid_of[i]]->fit(curves[i].values);
        },
        options.threads);

    LocalVariationSet set;
    set.derivative_smoothing = std::move(smoothing);
    for (std::size_t i = 0; i < n; ++i) {
        set.ids.push_back(curves[i].location_id);
        set.local_variation.push_back(std::move(*lv[i]));
        set.inverse_local_variation.push_back(std::move(*lv_inv[i]));
        if (options.compute_aligned) set.curves.push_back(std::move(*fits[i]));
    }
    return set;
}

RegistrationResult register_prepared(const LocalVariationSet& prepared, const DistanceMatrix* d,
                                     const RegistrationOptions& options) {
    const std::size_t n = prepared.ids.size();
    if (n < 3) throw ValidationError("registration needs at least 3 curves");
    RegistrationResult result;
    result.ids = prepared.ids;
    result.mode = options.mode;
    result.local_variation = prepared.local_variation;

    if (options.mode == RegistrationMode::Nonspatial) {
        result.weights.values = uniform(n);
        result.diagnostics.note = "nonspatial mode: uniform weights";
    } else {
        if (d == nullptr) throw ValidationError("spatial registration requires a distance matrix");
        const DistanceMatrix ordered = matched_distances(*d, prepared.ids);
        ordered.validate();
        if (exchangeable(ordered)) {
            result.weights.values = uniform(n);
            result.diagnostics.note = "all pairwise distances equal: BLUE weights are uniform";
        } else {
            result.cloud = semivariance_cloud(prepared.inverse_local_variation, prepared.ids, ordered);
            const bool all_zero = std::all_of(result.cloud.points.begin(), result.cloud.points.end(),
                                              [](const CloudPoint& p) { return p.semivariance == 0.0; });
            if (all_zero) {
                result.weights.values = uniform(n);
                result.diagnostics.note = "all inverse local variations coincide: any weights give the same mean";
            } else {
                IrwlsOptions fit_options = options.variogram;
                const VariogramFit fit = fit_irwls(result.cloud, fit_options);
                result.variogram = fit;
                result.diagnostics.variogram_fitted = true;
                result.diagnostics.irwls_converged = fit.converged;
                result.diagnostics.irwls_outer_iterations = fit.outer_iterations;
                result.diagnostics.irwls_inner_iterations = fit.inner_iterations;
                result.diagnostics.irwls_weighted_rss = fit.weighted_rss;
                const CovMatrix cov = covariance_matrix(fit.params, ordered);
                result.weights = blue_weights(cov);
                result.diagnostics.condition = result.weights.condition;
            }
        }
    }

    const WeightedMeanResult mean = weighted_mean(prepared.inverse_local_variation, result.weights.values);
    result.diagnostics.mean_projected = mean.projected;
    result.central_inverse = mean.map;
    result.central = invert(mean.map);

    result.inverse_warps.reserve(n);
    result.warps.reserve(n);
    const bool nonnegative = std::all_of(result.weights.values.begin(), result.weights.values.end(),
                                         [](double w) { return w >= 0.0; });
    for (std::size_t i = 0; i < n; ++i) {
        std::optional<MonotoneMap> inverse_warp;
        if (nonnegative && !mean.projected) {
            inverse_warp = exact_inverse_warp(prepared.local_variation, result.weights.values, i);
        }
        result.inverse_warps.push_back(inverse_warp ? std::move(*inverse_warp)
                                                    : compose(result.central_inverse, prepared.local_variation[i]));
        result.warps.push_back(invert(result.inverse_warps.back()));
    }

    if (!prepared.curves.empty()) {
        result.aligned.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& h = result.warps[i].values();
            std::vector<double> x(h.size());
            for (std::size_t g = 0; g < h.size(); ++g) x[g] = prepared.curves[i].value(h[g]);
            result.aligned[i] = options.normalize_aligned ? l2_normalize(x) : std::move(x);
        }
    }
    return result;
}

RegistrationResult register_curves(std::span<const SampledCurve> curves, const std::optional<DistanceMatrix>& d,
                                   const RegistrationOptions& options) {
    if (options.mode == RegistrationMode::Spatial && !d) {
        throw ValidationError("spatial registration requires a distance matrix");
    }
    const LocalVariationSet prepared = prepare_local_variation(curves, options);
    return register_prepared(prepared, d ? &*d : nullptr, options);
}

std::vector<PhaseFunctionals> phase_functionals(const RegistrationResult& result) {
    std::vector<PhaseFunctionals> out;
    out.reserve(result.inverse_warps.size());
    for (const auto& h_inv : result.inverse_warps) out.push_back(phase_functionals(h_inv));
    return out;
}

}  // namespace slva
