#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slva/curve_smoothing.hpp"
#include "slva/metric_embed.hpp"
#include "slva/variogram.hpp"
#include "slva/warp.hpp"

namespace slva {

enum class RegistrationMode { Spatial, Nonspatial };

struct RegistrationOptions {
    RegistrationMode mode = RegistrationMode::Spatial;
    int grid_size = kDefaultGridSize;
    /// Fit the cubic curve estimates and compose them with the warps.
    bool compute_aligned = true;
    /// L2-normalize the aligned curves.
    bool normalize_aligned = false;
    IrwlsOptions variogram;
    int threads = 1;
};

/// Per-location quantities that do not depend on the weighting: fitted
/// curves, local-variation distributions and their inverses.
struct LocalVariationSet {
    std::vector<std::string> ids;
    std::vector<MonotoneMap> local_variation;          // Lambda_i
    std::vector<MonotoneMap> inverse_local_variation;  // Lambda_i^{-1}
    std::vector<SmoothCurve> curves;                   // cubic fits (empty unless requested)
    std::vector<double> derivative_smoothing;          // quintic lambda per location
};

struct RegistrationDiagnostics {
    /// False when the weights were set uniform without a fit, as in
    /// nonspatial mode or with exchangeable distances.
    bool variogram_fitted = false;
    std::string note;
    bool irwls_converged = true;
    int irwls_outer_iterations = 0;
    int irwls_inner_iterations = 0;
    double irwls_weighted_rss = 0.0;
    /// Weighted mean of inverse local variations needed isotonic projection.
    bool mean_projected = false;
    double condition = 0.0;
};

struct RegistrationResult {
    std::vector<std::string> ids;
    RegistrationMode mode = RegistrationMode::Spatial;
    std::vector<MonotoneMap> inverse_warps;  // H_i^{-1}
    std::vector<MonotoneMap> warps;          // H_i
    std::vector<MonotoneMap> local_variation;
    MonotoneMap central = MonotoneMap::identity(2);          // Lambda_mu
    MonotoneMap central_inverse = MonotoneMap::identity(2);  // Lambda_mu^{-1}
    std::vector<std::vector<double>> aligned;  // x_i on the grid (if computed)
    Weights weights;
    std::optional<VariogramFit> variogram;
    VariogramCloud cloud;
    RegistrationDiagnostics diagnostics;
};

/// Affine map between an observed time axis and [0,1].
struct TimeAxis {
    double start = 0.0;
    double end = 1.0;
    double to_unit(double t) const { return (t - start) / (end - start); }
    double from_unit(double u) const { return start + u * (end - start); }
};

/// Axis spanning every observation time of every curve.
TimeAxis common_time_axis(std::span<const SampledCurve> raw);

/// Curves with times mapped onto [0,1] by `axis` (endpoints land exactly on 0 and 1).
std::vector<SampledCurve> rescale_times(std::span<const SampledCurve> raw, const TimeAxis& axis);

/// Smoothing, derivatives and local-variation distributions for every curve.
LocalVariationSet prepare_local_variation(std::span<const SampledCurve> curves,
                                          const RegistrationOptions& options);

/// Weights, central map and warps from prepared local variations.
/// `d` is required in spatial mode.
RegistrationResult register_prepared(const LocalVariationSet& prepared, const DistanceMatrix* d,
                                     const RegistrationOptions& options);

/// Full pipeline. Throws NumericalError when the spatial covariance matrix is
/// singular or not positive definite; nothing falls back silently.
RegistrationResult register_curves(std::span<const SampledCurve> curves,
                                   const std::optional<DistanceMatrix>& d,
                                   const RegistrationOptions& options = {});

/// Displacement and stretch of every estimated inverse warp.
std::vector<PhaseFunctionals> phase_functionals(const RegistrationResult& result);

}  // namespace slva
