#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "slva/error.hpp"
#include "slva/registration.hpp"
#include "slva/simulation.hpp"

using namespace slva;

namespace {

double sup_identity_gap(const MonotoneMap& m) {
    double s = 0.0;
    for (int g = 0; g < m.grid_size(); ++g) s = std::max(s, std::abs(m.values()[g] - m.grid_point(g)));
    return s;
}

std::vector<SampledCurve> shared_curve(int n) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    SampledCurve base{"", {}, {}};
    for (int j = 0; j < 80; ++j) {
        const double t = j / 79.0;
        base.times.push_back(t);
        base.values.push_back(std::sin(std::numbers::pi * t) + 0.3 * t + noise(rng));
    }
    std::vector<SampledCurve> curves;
    for (int i = 0; i < n; ++i) {
        curves.push_back(base);
        curves.back().location_id = "loc" + std::to_string(i);
    }
    return curves;
}

Replicate sample_replicate(Scheme scheme, double psi, std::uint64_t seed, std::uint64_t attempt = 0) {
    SimConfig c;
    c.scheme = scheme;
    c.psi = psi;
    c.seed = seed;
    return generate_replicate(c, attempt);
}

double mean_pairwise_l2(const std::vector<std::vector<double>>& curves) {
    double total = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < curves.size(); ++i) {
        for (std::size_t k = i + 1; k < curves.size(); ++k) {
            std::vector<double> d2(curves[i].size());
            for (std::size_t g = 0; g < d2.size(); ++g) d2[g] = std::pow(curves[i][g] - curves[k][g], 2);
            total += std::sqrt(trapezoid(d2));
            ++pairs;
        }
    }
    return total / pairs;
}

}  // namespace

TEST(Register, SharedCurveGivesIdentityWarpsInBothModes) {
    const auto curves = shared_curve(6);
    Eigen::MatrixXd x(6, 2);
    x << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.2, 0.3, 0.9;
    std::vector<std::string> ids;
    for (const auto& c : curves) ids.push_back(c.location_id);
    const DistanceMatrix d = euclidean_distances(x, ids);
    for (auto mode : {RegistrationMode::Spatial, RegistrationMode::Nonspatial}) {
        RegistrationOptions opt;
        opt.mode = mode;
        const RegistrationResult r = register_curves(curves, d, opt);
        for (const auto& h : r.inverse_warps) EXPECT_LT(sup_identity_gap(h), 1e-3);
        for (const auto& f : phase_functionals(r)) {
            EXPECT_NEAR(f.displacement, 0.0, 1e-3);
            EXPECT_NEAR(f.stretch, 0.0, 1e-3);
        }
    }
}

TEST(Register, EqualDistancesMatchNonspatial) {
    const Replicate rep = sample_replicate(Scheme::B, 0.3, 5);
    DistanceMatrix equal = rep.distances;
    equal.entries.setConstant(0.7);
    equal.entries.diagonal().setZero();
    RegistrationOptions sp;
    RegistrationOptions ns;
    ns.mode = RegistrationMode::Nonspatial;
    const RegistrationResult a = register_curves(rep.curves, equal, sp);
    const RegistrationResult b = register_curves(rep.curves, std::nullopt, ns);
    for (std::size_t i = 0; i < a.inverse_warps.size(); ++i) {
        for (int g = 0; g < a.inverse_warps[i].grid_size(); ++g) {
            EXPECT_NEAR(a.inverse_warps[i].values()[g], b.inverse_warps[i].values()[g], 1e-8);
        }
    }
    double s = 0.0;
    for (double w : a.weights.values) s += w;
    EXPECT_NEAR(s, 1.0, 1e-10);
}

TEST(Register, NonspatialNeedsNoDistances) {
    const Replicate rep = sample_replicate(Scheme::C, 0.1, 8);
    RegistrationOptions ns;
    ns.mode = RegistrationMode::Nonspatial;
    const RegistrationResult r = register_curves(rep.curves, std::nullopt, ns);
    EXPECT_EQ(r.inverse_warps.size(), rep.curves.size());
    for (double w : r.weights.values) EXPECT_EQ(w, 1.0 / 36.0);
    RegistrationOptions sp;
    EXPECT_THROW(register_curves(rep.curves, std::nullopt, sp), ValidationError);
}

TEST(Register, WarpsAreValidGroupElements) {
    const Replicate rep = sample_replicate(Scheme::D, 0.3, 2);
    const RegistrationResult r = register_curves(rep.curves, rep.distances);
    const int g_count = r.warps.front().grid_size();
    for (std::size_t i = 0; i < r.warps.size(); ++i) {
        // Each H_i is the exact piecewise-linear inverse at grid points, so this
        // order returns the grid up to rounding.
        const MonotoneMap round = compose(r.inverse_warps[i], r.warps[i]);
        EXPECT_LE(sup_identity_gap(round), 1e-9);
    }
    double s = 0.0;
    for (double w : r.weights.values) s += w;
    EXPECT_NEAR(s, 1.0, 1e-10);
    ASSERT_EQ(r.aligned.size(), rep.curves.size());
    EXPECT_EQ(static_cast<int>(r.aligned.front().size()), g_count);
}

TEST(Register, MismatchedIdsRejected) {
    const Replicate rep = sample_replicate(Scheme::B, 0.3, 4);
    DistanceMatrix d = rep.distances;
    d.ids[3] = "elsewhere";
    EXPECT_THROW(register_curves(rep.curves, d), ValidationError);
}

TEST(Register, DeterministicAndThreadIndependent) {
    const Replicate rep = sample_replicate(Scheme::C, 0.3, 6);
    RegistrationOptions one;
    one.threads = 1;
    RegistrationOptions four;
    four.threads = 4;
    const RegistrationResult a = register_curves(rep.curves, rep.distances, one);
    const RegistrationResult b = register_curves(rep.curves, rep.distances, one);
    const RegistrationResult c = register_curves(rep.curves, rep.distances, four);
    for (std::size_t i = 0; i < a.inverse_warps.size(); ++i) {
        EXPECT_TRUE(a.inverse_warps[i].values() == b.inverse_warps[i].values());
        EXPECT_TRUE(a.inverse_warps[i].values() == c.inverse_warps[i].values());
        EXPECT_TRUE(a.aligned[i] == c.aligned[i]);
    }
    EXPECT_TRUE(a.weights.values == c.weights.values);
}

TEST(Register, TimeAxisRescaledExactly) {
    const Replicate rep = sample_replicate(Scheme::A, 0.1, 1);
    std::vector<SampledCurve> shifted = rep.curves;
    for (auto& c : shifted)
        for (double& t : c.times) t = 2000.0 + 50.0 * t;
    const TimeAxis axis = common_time_axis(shifted);
    EXPECT_EQ(axis.start, 2000.0);
    EXPECT_EQ(axis.end, 2050.0);
    const auto unit = rescale_times(shifted, axis);
    for (std::size_t i = 0; i < unit.size(); ++i) {
        EXPECT_EQ(unit[i].times.front(), 0.0);
        EXPECT_EQ(unit[i].times.back(), 1.0);
        for (std::size_t j = 0; j < unit[i].times.size(); ++j) {
            EXPECT_NEAR(unit[i].times[j], rep.curves[i].times[j], 1e-14);
        }
    }
}

TEST(Register, PowerOfTwoTimeScaleGivesIdenticalWarps) {
    // Scaling by 4 is exact in binary, so the rescaled input is bit-identical.
    const Replicate rep = sample_replicate(Scheme::A, 0.1, 1);
    std::vector<SampledCurve> scaled = rep.curves;
    for (auto& c : scaled)
        for (double& t : c.times) t *= 4.0;
    const auto unit = rescale_times(scaled, common_time_axis(scaled));
    RegistrationOptions ns;
    ns.mode = RegistrationMode::Nonspatial;
    const auto a = register_curves(unit, std::nullopt, ns);
    const auto b = register_curves(rep.curves, std::nullopt, ns);
    for (std::size_t i = 0; i < a.inverse_warps.size(); ++i) {
        EXPECT_TRUE(a.inverse_warps[i].values() == b.inverse_warps[i].values());
    }
}

TEST(PhaseFunctionals, IdentityAndSquareWarp) {
    RegistrationResult r;
    r.inverse_warps = {MonotoneMap::identity(), MonotoneMap::from_function([](double t) { return t * t; }),
                       MonotoneMap::identity()};
    const auto f = phase_functionals(r);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_NEAR(f[0].displacement, 0.0, 1e-6);
    EXPECT_NEAR(f[0].stretch, 0.0, 1e-6);
    EXPECT_NEAR(f[1].displacement, 1.0 / 6.0, 1e-3);
    EXPECT_NEAR(f[1].stretch, std::log(2.0 / 3.0), 1e-3);
}

TEST(Register, AlignmentReducesSpreadOfNormalizedCurves) {
    double aligned_total = 0.0;
    double raw_total = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Replicate rep = sample_replicate(Scheme::B, 0.3, 100, k);
        RegistrationOptions opt;
        opt.normalize_aligned = true;
        const RegistrationResult r = register_curves(rep.curves, rep.distances, opt);
        std::vector<std::vector<double>> raw;
        for (const auto& c : rep.curves) {
            raw.push_back(l2_normalize(fit_smoothing_spline(c, PenaltyOrder::Cubic).sample(kDefaultGridSize)));
        }
        aligned_total += mean_pairwise_l2(r.aligned);
        raw_total += mean_pairwise_l2(raw);
    }
    EXPECT_LT(aligned_total, raw_total);
}
