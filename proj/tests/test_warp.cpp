#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "slva/error.hpp"
#include "slva/warp.hpp"

using namespace slva;

namespace {

constexpr int G = kDefaultGridSize;
constexpr double kPi = std::numbers::pi;

double at(int g) { return static_cast<double>(g) / (G - 1); }

MonotoneMap square() { return MonotoneMap::from_function([](double t) { return t * t; }); }
MonotoneMap root() { return MonotoneMap::from_function([](double t) { return std::sqrt(t); }); }

double sup_distance(const MonotoneMap& a, const MonotoneMap& b) {
    double s = 0.0;
    for (int g = 0; g < a.grid_size(); ++g) s = std::max(s, std::abs(a.values()[g] - b.values()[g]));
    return s;
}

// Random strictly increasing map: normalized cumulative sum of positive steps.
MonotoneMap random_map(std::mt19937_64& rng) {
    std::gamma_distribution<double> step(0.5, 1.0);
    std::vector<double> v(G, 0.0);
    for (int g = 1; g < G; ++g) v[g] = v[g - 1] + step(rng) + 1e-6;
    const double total = v.back();
    for (double& x : v) x /= total;
    v.back() = 1.0;
    return MonotoneMap(v);
}

// Adaptive Simpson, used as an oracle for integrals of |f'|.
double simpson(const std::function<double(double)>& f, double a, double b, double eps, int depth = 0) {
    const double c = 0.5 * (a + b);
    const double whole = (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
    const double left = (c - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + c)) + f(c));
    const double right = (b - c) / 6.0 * (f(c) + 4.0 * f(0.5 * (c + b)) + f(b));
    if (depth > 40 || std::abs(left + right - whole) < 15.0 * eps) return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, c, eps / 2.0, depth + 1) + simpson(f, c, b, eps / 2.0, depth + 1);
}

}  // namespace

TEST(MonotoneMap, RejectsInvalidValues) {
    EXPECT_THROW(MonotoneMap({0.0, 0.5, 0.5, 1.0}), ValidationError);
    EXPECT_THROW(MonotoneMap({0.0, 0.5, 0.9}), ValidationError);
    EXPECT_THROW(MonotoneMap({0.1, 0.5, 1.0}), ValidationError);
    EXPECT_NO_THROW(MonotoneMap({0.0, 0.2, 1.0}));
}

TEST(LocalVariation, IdentityForLinearCurve) {
    const MonotoneMap lv = local_variation(std::vector<double>(G, 1.0));
    EXPECT_LT(sup_distance(lv, MonotoneMap::identity()), 1e-8);
}

TEST(LocalVariation, SineMatchesQuadratureOracle) {
    std::vector<double> df(G);
    for (int g = 0; g < G; ++g) df[g] = kPi * std::cos(kPi * at(g));
    const MonotoneMap lv = local_variation(df);
    const auto absd = [](double t) { return std::abs(kPi * std::cos(kPi * t)); };
    const double total = simpson(absd, 0.0, 0.5, 1e-13) + simpson(absd, 0.5, 1.0, 1e-13);
    for (int g = 0; g < G; g += 10) {
        const double t = at(g);
        const double oracle = t <= 0.5 ? simpson(absd, 0.0, t, 1e-13)
                                       : simpson(absd, 0.0, 0.5, 1e-13) + simpson(absd, 0.5, t, 1e-13);
        EXPECT_NEAR(lv(t), oracle / total, 1e-4);
        const double closed = t <= 0.5 ? std::sin(kPi * t) / 2.0 : 1.0 - std::sin(kPi * t) / 2.0;
        EXPECT_NEAR(lv(t), closed, 1e-4);
    }
}

TEST(LocalVariation, MonotoneCurveGivesNormalizedCurve) {
    std::vector<double> df(G);
    for (int g = 0; g < G; ++g) df[g] = 2.0 * at(g);
    const MonotoneMap lv = local_variation(df);
    for (int g = 0; g < G; ++g) EXPECT_NEAR(lv.values()[g], at(g) * at(g), 1e-6);
}

TEST(LocalVariation, ScaleInvariant) {
    std::vector<double> df(G), scaled(G);
    for (int g = 0; g < G; ++g) {
        df[g] = std::cos(3.0 * at(g)) + 0.2 * at(g);
        scaled[g] = 7.5 * df[g];
    }
    EXPECT_LT(sup_distance(local_variation(df), local_variation(scaled)), 1e-10);
}

TEST(LocalVariation, FlatStretchesStayStrict) {
    std::vector<double> df(G, 0.0);
    for (int g = 300; g < 400; ++g) df[g] = 1.0;
    const MonotoneMap lv = local_variation(df);
    for (int g = 1; g < G; ++g) EXPECT_GT(lv.values()[g], lv.values()[g - 1]);
}

TEST(LocalVariation, ZeroDerivativeIsDegenerate) {
    EXPECT_THROW(local_variation(std::vector<double>(G, 0.0)), DegenerateInputError);
}

TEST(LocalVariation, WarpingEquivariance) {
    // f(t) = sin(pi t) viewed through the inverse warp u(t) = (t + t^2) / 2.
    const auto u = [](double t) { return 0.5 * (t + t * t); };
    std::vector<double> d_f(G), d_warped(G);
    for (int g = 0; g < G; ++g) {
        const double t = at(g);
        d_f[g] = kPi * std::cos(kPi * t);
        d_warped[g] = kPi * std::cos(kPi * u(t)) * (0.5 + t);
    }
    const MonotoneMap lhs = local_variation(d_warped);
    const MonotoneMap rhs = compose(local_variation(d_f), MonotoneMap::from_function(u));
    EXPECT_LT(sup_distance(lhs, rhs), 3.0 / G);
}

TEST(Invert, IdentityAndSquareRoot) {
    EXPECT_LT(sup_distance(invert(MonotoneMap::identity()), MonotoneMap::identity()), 1e-12);
    EXPECT_LT(sup_distance(invert(square()), root()), 2.0 / G);
}

TEST(Invert, InvolutionOnRandomMaps) {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 100; ++k) {
        const MonotoneMap m = random_map(rng);
        const MonotoneMap back = invert(invert(m));
        EXPECT_LE(sup_distance(back, m), 2.0 / G);
    }
}

TEST(Compose, IdentityInverseAndPowers) {
    std::mt19937_64 rng(4);
    const MonotoneMap m = random_map(rng);
    EXPECT_LT(sup_distance(compose(m, MonotoneMap::identity()), m), 1e-10);
    EXPECT_LE(sup_distance(compose(m, invert(m)), MonotoneMap::identity()), 2.0 / G);
    const MonotoneMap fourth = MonotoneMap::from_function([](double t) { return std::pow(t, 4); });
    EXPECT_LE(sup_distance(compose(square(), square()), fourth), 2.0 / G);
}

TEST(Compose, GroupClosureOnRandomMaps) {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 50; ++k) {
        const MonotoneMap a = random_map(rng);
        const MonotoneMap b = random_map(rng);
        // Construction validates strict monotonicity and pinning.
        const MonotoneMap c = compose(a, b);
        const MonotoneMap ia = invert(a);
        EXPECT_EQ(c.values().front(), 0.0);
        EXPECT_EQ(c.values().back(), 1.0);
        EXPECT_EQ(ia.values().front(), 0.0);
        EXPECT_EQ(ia.values().back(), 1.0);
    }
}

TEST(WeightedMean, BasicCases) {
    std::mt19937_64 rng(2);
    const MonotoneMap m = random_map(rng);
    const std::vector<MonotoneMap> same{m, m, m};
    const auto r = weighted_mean(same, std::vector<double>{0.7, -0.2, 0.5});
    EXPECT_LT(sup_distance(r.map, m), 1e-12);

    const std::vector<MonotoneMap> two{square(), root()};
    EXPECT_LT(sup_distance(weighted_mean(two, std::vector<double>{1.0, 0.0}).map, square()), 1e-15);
    const auto half = weighted_mean(two, std::vector<double>{0.5, 0.5});
    EXPECT_FALSE(half.projected);
    for (int g = 0; g < G; ++g) {
        const double t = at(g);
        EXPECT_NEAR(half.map.values()[g], 0.5 * (square().values()[g] + root().values()[g]), 1e-10);
        EXPECT_NEAR(half.map(t), 0.5 * (t * t + std::sqrt(t)), 1e-10);
    }
}

TEST(WeightedMean, WeightSumChecked) {
    const std::vector<MonotoneMap> two{square(), root()};
    EXPECT_THROW(weighted_mean(two, std::vector<double>{0.5, 0.6}), ValidationError);
}

TEST(WeightedMean, NegativeWeightsProjectToValidMap) {
    const std::vector<MonotoneMap> two{square(), root()};
    const auto r = weighted_mean(two, std::vector<double>{2.5, -1.5});
    EXPECT_TRUE(r.projected);
    for (int g = 1; g < G; ++g) EXPECT_GT(r.map.values()[g], r.map.values()[g - 1]);
    EXPECT_EQ(r.map.values().front(), 0.0);
    EXPECT_EQ(r.map.values().back(), 1.0);
}

TEST(Isotonic, PoolsViolators) {
    const auto fit = isotonic_regression(std::vector<double>{1.0, 3.0, 2.0, 4.0, 0.0});
    const std::vector<double> expected{1.0, 2.25, 2.25, 2.25, 2.25};
    ASSERT_EQ(fit.size(), expected.size());
    for (std::size_t i = 0; i < fit.size(); ++i) EXPECT_NEAR(fit[i], expected[i], 1e-15);
}

TEST(Functionals, IdentitySquareAndRoot) {
    EXPECT_NEAR(displacement(MonotoneMap::identity()), 0.0, 1e-6);
    EXPECT_NEAR(stretch(MonotoneMap::identity()), 0.0, 1e-6);
    EXPECT_NEAR(displacement(square()), 1.0 / 6.0, 1e-4);
    EXPECT_NEAR(stretch(square()), std::log(2.0 / 3.0), 1e-3);
    EXPECT_NEAR(displacement(root()), -1.0 / 6.0, 1e-4);
    EXPECT_NEAR(stretch(root()), std::log(16.0 / 15.0), 1e-3);
    const PhaseFunctionals p = phase_functionals(square());
    EXPECT_EQ(p.displacement, displacement(square()));
    EXPECT_EQ(p.stretch, stretch(square()));
}

TEST(Functionals, EarlierMassMeansNegativeDisplacement) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    for (int k = 0; k < 50; ++k) {
        const double a = u(rng);
        // t^(1/(1+a)) lies above the identity on (0,1).
        const MonotoneMap m = MonotoneMap::from_function([a](double t) { return std::pow(t, 1.0 / (1.0 + a)); });
        EXPECT_LT(displacement(m), 0.0);
        EXPECT_GT(displacement(m), -0.5);
    }
}

TEST(SquaredDistance, PolynomialIntegral) {
    // int (t - t^2)^2 dt = 1/30.
    EXPECT_NEAR(squared_l2_distance(MonotoneMap::identity(), square()), 1.0 / 30.0, 1e-6);
}
