#pragma once

#include "vorder/core.hpp"

namespace vorder {

/// Gamma function on the real line, rejecting the poles at 0, -1, -2, ...
double gamma(double x);

/// e^{a log z} with the principal logarithm. Throws a branch error on (-inf, 0].
Complex principal_power(Complex z, double a);

struct SeriesOptions {
  double tol = 1e-16;
  int max_terms = 500;
};

/// Power series of J_nu at z. Half-integer orders use the principal branch of z^nu.
Complex bessel_j_series(double nu, Complex z, const SeriesOptions& opts = {});

/// Two-term large-|z| expansion of J_nu, valid for arg z away from the negative axis.
Complex bessel_j_asymptotic(double nu, Complex z);

/// Modulus where bessel_j stops summing the series and uses the expansion.
inline constexpr double kBesselSeriesLimit = 60.0;

/// J_nu(z): series below kBesselSeriesLimit, asymptotic expansion above.
Complex bessel_j(double nu, Complex z, const SeriesOptions& opts = {});

bool is_integer(double x);

}  // namespace vorder
