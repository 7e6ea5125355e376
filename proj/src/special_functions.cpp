#include "slva/special_functions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/bessel.hpp>

#include "slva/error.hpp"

namespace slva {
namespace {

constexpr double kUniformThreshold = 50.0;
constexpr double kTinyArgument = 1e-100;

struct LogPair {
    double log_k_mu;  // log K_mu(x)
    double ratio;     // K_{mu+1}(x) / K_mu(x)
};

// Steed's continued fraction (CF2) for x >= 2, returning log K_mu and the
// ratio K_{mu+1}/K_mu without forming exp(-x).
LogPair steed_cf2(double mu, double x) {
    constexpr double kEps = 1e-16;
    constexpr int kMaxIter = 100000;
    const double mu2 = mu * mu;
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i < kMaxIter; ++i) {
        a -= 2 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < kEps) break;
    }
    h = a1 * h;
    LogPair out;
    out.log_k_mu = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
    out.ratio = (mu + x + 0.5 - h) / x;
    return out;
}

LogPair small_argument_pair(double mu, double x) {
    const double k_mu = boost::math::cyl_bessel_k(std::abs(mu), x);
    const double k_mu1 = boost::math::cyl_bessel_k(mu + 1.0, x);
    return {std::log(k_mu), k_mu1 / k_mu};
}

}  // namespace

double log_bessel_k_recurrence(double nu, double x) {
    if (!(nu >= 0.0) || !(x > 0.0) || !std::isfinite(nu) || !std::isfinite(x)) {
        throw ValidationError("log_bessel_k requires nu >= 0 and x > 0");
    }
    const int steps = static_cast<int>(std::floor(nu + 0.5));
    const double mu = nu - steps;
    const LogPair start = x < 2.0 ? small_argument_pair(mu, x) : steed_cf2(mu, x);
    if (steps == 0) return start.log_k_mu;

    double log_sum = start.log_k_mu;
    double ratio = start.ratio;
    double product = ratio;
    for (int j = 1; j < steps; ++j) {
        ratio = 2.0 * (mu + j) / x + 1.0 / ratio;
        product *= ratio;
        if (product > 1e280) {
            log_sum += std::log(product);
            product = 1.0;
        }
    }
    return log_sum + std::log(product);
}

double log_bessel_k_uniform(double nu, double x) {
    if (!(nu > 0.0) || !(x > 0.0)) throw ValidationError("log_bessel_k requires nu > 0 and x > 0");
    const double z = x / nu;
    const double root = std::hypot(1.0, z);
    const double t = 1.0 / root;
    const double eta = root + std::log(z / (1.0 + root));
    const double t2 = t * t;
    const double u1 = t * (3.0 - 5.0 * t2) / 24.0;
    const double u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
    const double u3 = t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - t2 * 425425.0))) / 414720.0;
    const double u4 = t2 * t2 *
                      (4465125.0 +
                       t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0)))) /
                      39813120.0;
    const double inv = 1.0 / nu;
    const double series = 1.0 - inv * (u1 - inv * (u2 - inv * (u3 - inv * u4)));
    return 0.5 * std::log(std::numbers::pi / (2.0 * nu)) - nu * eta - 0.5 * std::log(root) +
           std::log(series);
}

double log_bessel_k(double nu, double x) {
    if (nu > kUniformThreshold) return log_bessel_k_uniform(nu, x);
    return log_bessel_k_recurrence(nu, x);
}

double matern_correlation(double scaled_distance, double shape) {
    if (!(scaled_distance >= 0.0) || !(shape > 0.0)) {
        throw ValidationError("matern correlation requires h >= 0 and shape > 0");
    }
    if (scaled_distance == 0.0) return 1.0;
    if (std::isinf(scaled_distance)) return 0.0;
    const double x = std::sqrt(2.0 * shape) * scaled_distance;
    if (x < kTinyArgument) return 1.0;
    const double log_corr = (1.0 - shape) * std::numbers::ln2 - std::lgamma(shape) +
                            shape * std::log(x) + log_bessel_k(shape, x);
    return std::exp(std::min(0.0, log_corr));
}

}  // namespace slva
