#pragma once

namespace slva {

/// Natural log of the modified Bessel function of the second kind K_nu(x),
/// for nu >= 0 and x > 0, without overflow or underflow.
///
/// nu <= 50: K_mu and K_{mu+1} for |mu| <= 1/2 (series for x < 2, Steed's
/// continued fraction in scaled form for x >= 2) followed by upward
/// recurrence carried as log-ratios. nu > 50: uniform asymptotic (Debye)
/// expansion through the u_4 term.
double log_bessel_k(double nu, double x);

/// Recurrence branch only; exposed so tests can compare the two branches.
double log_bessel_k_recurrence(double nu, double x);

/// Uniform asymptotic branch only.
double log_bessel_k_uniform(double nu, double x);

/// Matern correlation 2^{1-nu}/Gamma(nu) (sqrt(2 nu) h)^nu K_nu(sqrt(2 nu) h)
/// at scaled distance h = d / range, evaluated in log space. Returns 1 at h = 0
/// and a value in [0, 1] for every h >= 0.
double matern_correlation(double scaled_distance, double shape);

}  // namespace slva
