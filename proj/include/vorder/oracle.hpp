#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include "vorder/geometry.hpp"

namespace vorder {

/// Gauss-Legendre nodes and weights on [a, b], computed by Newton iteration.
std::pair<Vec, Vec> gauss_legendre(int n, double a = -1.0, double b = 1.0);

enum class QuadratureMethod { Tensor, Adaptive, MonteCarlo };

struct QuadratureSpec {
  QuadratureMethod method = QuadratureMethod::Tensor;
  double tol = 1e-11;        // relative agreement between successive orders / cells
  int max_order = 64;        // largest tensor order tried
  int max_depth = 0;         // adaptive bisection depth cap; 0 picks a default per dimension
  std::size_t samples = 200000;
  std::uint64_t seed = 1;
};

struct QuadratureResult {
  Complex value;
  double error = 0.0;  // difference of the last two orders, summed cell errors, or MC standard error
  int order = 0;       // last tensor order, or number of adaptive cells
  std::vector<double> history;  // tensor: error estimate after each escalation
};

using Integrand = std::function<Complex(const Vec&)>;

/// ∫ f over the shape of the inclusion (amplitude ignored). Balls support d ∈ {2, 3}.
QuadratureResult quadrature_integral(const Inclusion& shape, const Integrand& f, const QuadratureSpec& spec = {});

/// ∫ e^{x·y} dx over the shape.
QuadratureResult quadrature_moment(const Inclusion& shape, const CVec& y, const QuadratureSpec& spec = {});

}  // namespace vorder
