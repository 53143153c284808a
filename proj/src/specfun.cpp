#include "vorder/specfun.hpp"

#include <cmath>

namespace vorder {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Branch: return "branch";
    case ErrorKind::Precision: return "precision";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Genericity: return "genericity";
    case ErrorKind::Separation: return "separation";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Numerics: return "numerics";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Mesh: return "mesh";
  }
  return "unknown";
}

bool is_integer(double x) { return std::isfinite(x) && x == std::round(x); }

double gamma(double x) {
  if (!std::isfinite(x)) throw Error(ErrorKind::Domain, "gamma of non-finite argument");
  if (x <= 0.0 && is_integer(x)) throw Error(ErrorKind::Domain, "gamma pole at non-positive integer");
  return std::tgamma(x);
}

namespace {

bool on_negative_axis(Complex z) { return z.imag() == 0.0 && z.real() <= 0.0; }

}  // namespace

Complex principal_power(Complex z, double a) {
  if (on_negative_axis(z)) throw Error(ErrorKind::Branch, "principal power on the cut (-inf, 0]");
  return std::exp(a * std::log(z));
}

Complex bessel_j_series(double nu, Complex z, const SeriesOptions& opts) {
  if (nu < 0.0) throw Error(ErrorKind::Domain, "bessel_j requires nu >= 0");
  const bool integer_order = is_integer(nu);
  if (z == Complex(0.0, 0.0)) return nu == 0.0 ? Complex(1.0, 0.0) : Complex(0.0, 0.0);

  const Complex half = 0.5 * z;
  Complex lead;
  if (integer_order) {
    lead = std::pow(half, static_cast<int>(nu));
  } else {
    if (on_negative_axis(z)) throw Error(ErrorKind::Branch, "bessel_j of non-integer order on the cut");
    lead = principal_power(half, nu);
  }

  Complex term = lead / gamma(nu + 1.0);
  Complex sum = term;
  const Complex step = -half * half;
  for (int n = 0; n < opts.max_terms; ++n) {
    term *= step / ((n + 1.0) * (nu + n + 1.0));
    sum += term;
    // Terms first grow while n < |z|/2; only test once they are decreasing.
    if (n + 1 > 0.5 * std::abs(z) && std::abs(term) <= opts.tol * std::abs(sum)) return sum;
  }
  throw Error(ErrorKind::Precision, "bessel_j series did not converge within the term cap");
}

Complex bessel_j_asymptotic(double nu, Complex z) {
  if (nu < 0.0) throw Error(ErrorKind::Domain, "bessel_j requires nu >= 0");
  if (std::abs(z) < 10.0) throw Error(ErrorKind::Precision, "asymptotic Bessel form needs |z| >= 10");
  const double arg_z = std::arg(z);
  constexpr double kCutGuard = 1e-3;
  if (std::abs(arg_z) > kPi - kCutGuard) throw Error(ErrorKind::Branch, "asymptotic Bessel form too close to the cut");

  // w = e^{i pi/2} z with arg w in (-pi/2, 3pi/2); w^{-1/2} follows that continuous branch.
  const Complex i(0.0, 1.0);
  const Complex w = i * z;
  const double arg_w = arg_z + 0.5 * kPi;
  const Complex inv_sqrt = std::polar(1.0 / std::sqrt(2.0 * kPi * std::abs(w)), -0.5 * arg_w);
  const Complex rotated = inv_sqrt * std::exp(w) + inv_sqrt * std::exp(-w + i * (nu + 0.5) * kPi);
  return std::exp(-i * (0.5 * nu * kPi)) * rotated;
}

Complex bessel_j(double nu, Complex z, const SeriesOptions& opts) {
  if (std::abs(z) > kBesselSeriesLimit) return bessel_j_asymptotic(nu, z);
  return bessel_j_series(nu, z, opts);
}

}  // namespace vorder
