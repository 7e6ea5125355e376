#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "slva/special_functions.hpp"

using namespace slva;

namespace {

// log K_nu(x) from K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, summed
// by the trapezoid rule in log space. The integrand is smooth and decays
// doubly exponentially, so a fine uniform rule is accurate to near rounding.
double log_bessel_k_integral(double nu, double x) {
    const auto g = [&](double t) {
        const double nt = nu * t;
        const double log_cosh = nt + std::log1p(std::exp(-2.0 * nt)) - std::numbers::ln2;
        return -x * std::cosh(t) + log_cosh;
    };
    const double peak = nu > 0.0 ? std::asinh(nu / x) : 0.0;
    const double top = g(peak);
    double upper = peak + 1.0;
    while (g(upper) > top - 60.0) upper += 0.5;
    const int n = 400000;
    const double h = upper / n;
    double sum = 0.5 * std::exp(g(0.0) - top) + 0.5 * std::exp(g(upper) - top);
    for (int k = 1; k < n; ++k) sum += std::exp(g(k * h) - top);
    return top + std::log(sum * h);
}

}  // namespace

TEST(LogBesselK, MatchesIntegralOracle) {
    for (double nu : {0.0, 0.05, 0.3, 0.5, 1.0, 1.5, 2.7, 10.0, 49.5, 50.5, 112.0, 150.0}) {
        for (double x : {1e-3, 0.1, 0.9, 1.99, 2.0, 2.01, 5.0, 30.0, 200.0, 700.0}) {
            const double oracle = log_bessel_k_integral(nu, x);
            const double got = log_bessel_k(nu, x);
            EXPECT_NEAR(got, oracle, 1e-9 * std::max(1.0, std::abs(oracle))) << "nu=" << nu << " x=" << x;
        }
    }
}

TEST(LogBesselK, HalfOrderClosedForm) {
    // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}.
    for (double x : {1e-8, 1e-3, 0.5, 1.0, 2.0, 3.7, 50.0, 1e3}) {
        const double closed = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x;
        EXPECT_NEAR(log_bessel_k(0.5, x), closed, 1e-12 * std::max(1.0, std::abs(closed)));
    }
}

TEST(LogBesselK, BranchesAgreeNearCrossover) {
    for (double nu : {40.0, 50.0, 60.0, 100.0}) {
        for (double x : {0.5, 5.0, 50.0, 300.0}) {
            const double a = log_bessel_k_recurrence(nu, x);
            const double b = log_bessel_k_uniform(nu, x);
            EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, std::abs(a))) << "nu=" << nu << " x=" << x;
        }
    }
}

TEST(MaternCorrelation, HalfOrderIsExponential) {
    // Criterion range d/rho in [1e-6, 1e3] plus zero.
    EXPECT_EQ(matern_correlation(0.0, 0.5), 1.0);
    for (double e = -6.0; e <= 3.0; e += 0.01) {
        const double h = std::pow(10.0, e);
        EXPECT_NEAR(matern_correlation(h, 0.5), std::exp(-h), 1e-10) << "h=" << h;
    }
    for (int k = 0; k <= 1000; ++k) {
        const double h = 10.0 * k / 1000.0;
        EXPECT_NEAR(matern_correlation(h, 0.5), std::exp(-h), 1e-10);
    }
}

TEST(MaternCorrelation, FiniteAndBoundedOverShapeRange) {
    std::vector<double> shapes;
    for (double e = std::log10(0.05); e <= std::log10(150.0) + 1e-12; e += 0.05) shapes.push_back(std::pow(10.0, e));
    shapes.push_back(150.0);
    for (double nu : shapes) {
        double previous = 1.0;
        for (double e = -12.0; e <= 3.0; e += 0.05) {
            const double r = matern_correlation(std::pow(10.0, e), nu);
            ASSERT_TRUE(std::isfinite(r)) << "nu=" << nu << " h=1e" << e;
            EXPECT_GE(r, 0.0);
            EXPECT_LE(r, 1.0);
            EXPECT_LE(r, previous + 1e-12);
            previous = r;
        }
    }
}

TEST(MaternCorrelation, WholeOrderClosedForm) {
    // nu = 3/2: (1 + sqrt3 h) exp(-sqrt3 h).
    for (double h : {1e-4, 0.1, 0.5, 1.0, 3.0, 10.0}) {
        const double s = std::sqrt(3.0) * h;
        EXPECT_NEAR(matern_correlation(h, 1.5), (1.0 + s) * std::exp(-s), 1e-10);
    }
}
