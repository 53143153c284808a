#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vorder/geometry.hpp"

namespace vorder {

// ---------------------------------------------------------------------------
// Hyperspherical directions. Rows of `basis` are ê₁..ê_d; theta may be complex.
// ---------------------------------------------------------------------------

struct SphereDirection {
  Mat basis;
  Complex theta{0.0, 0.0};
  Vec phis;  // length d - 2

  int dim() const { return static_cast<int>(basis.rows()); }

  /// Throws a domain error unless basis is orthonormal and phis has length d - 2.
  void validate() const;

  /// Same basis and phis, theta shifted to theta - iR.
  SphereDirection on_half_line(double R) const;
};

SphereDirection make_direction(Mat basis, Complex theta, Vec phis = Vec());

/// Real unit vector -> (theta in [0, pi], phis) in the given basis.
SphereDirection direction_from_vector(const Mat& basis, const Vec& unit);

/// ω(θ, φ) as a complex vector in standard coordinates.
CVec direction_vector(const SphereDirection& dir);

/// ω(θ + π/2, φ): the imaginary direction along a half-line θ̃ - iR.
Vec quarter_turn(const SphereDirection& dir);

// ---------------------------------------------------------------------------
// Exponential moments ∫_D e^{x·y} dx.
// ---------------------------------------------------------------------------

/// Ball of radius r centred at the origin, complex frequency y.
Complex ball_moment(double radius, const CVec& y);

/// Ball moment at y = ω(θ, φ) + ê₁; theta must lie in the strip |Re θ| < π/2.
Complex ball_moment(double radius, const SphereDirection& dir);

/// Divided difference of exp over the node multiset; continuous through confluences.
Complex exp_divided_difference(const CVec& nodes);

/// Simplex base + matrix·T, with T the unit simplex.
Complex simplex_moment(const Vec& base, const Mat& matrix, const CVec& y);

/// Axis-aligned box with the given centre and side lengths.
Complex box_moment(const Vec& center, const Vec& widths, const CVec& y);

/// Moment of the inclusion shape (amplitude not applied), translation included.
Complex shape_moment(const Inclusion& inc, const CVec& y);

/// Σ amplitude·moment over cfg1 minus the same over cfg2, at frequency y.
Complex difference_moment(const OrderField& cfg1, const OrderField& cfg2, const CVec& y);

/// Same, at y = ω(dir) + omega0.
Complex difference_moment(const OrderField& cfg1, const OrderField& cfg2, const SphereDirection& dir,
                          const Vec& omega0);

/// Moment function W along directions; what the recovery algorithms consume.
using MomentSampler = std::function<Complex(const SphereDirection&)>;

/// Sampler for the difference of two configurations with ê₁ of the direction basis as ω₀.
MomentSampler difference_sampler(OrderField cfg1, OrderField cfg2);

// ---------------------------------------------------------------------------
// Direction selection.
// ---------------------------------------------------------------------------

/// Affine functional ω ↦ ω·a - b that a generic direction must keep away from zero.
struct HyperplaneConstraint {
  Vec a;
  double b = 0.0;
};

struct GenericOptions {
  double margin_factor = 1e-3;  // margin = factor · max |a_i|
  int samples_per_seed = 2000;
  int seeds = 8;
};

Vec generic_direction(const std::vector<HyperplaneConstraint>& constraints, int dim, std::uint64_t seed,
                      const GenericOptions& opts = {});

/// Constraints (x_i - x_j)·ω ≠ 0 for every pair of distinct points.
std::vector<HyperplaneConstraint> distinct_projection_constraints(const std::vector<Vec>& points);

/// Values of every functional defining the set S̃ (both the direct and quarter-turn families)
/// for a real direction; a direction is admissible when none of them is small.
std::vector<double> simplex_genericity_values(const std::vector<Mat>& matrices, const SphereDirection& dir);

/// Real direction (theta, phis) in the basis whose S̃ functionals all exceed the margin.
SphereDirection simplex_generic_direction(const std::vector<Mat>& matrices, const Mat& basis, std::uint64_t seed,
                                          const GenericOptions& opts = {});

struct SeparatingDirection {
  Vec omega;
  double gap = 0.0;  // min over other vertices of (vertex - x)·omega
};

SeparatingDirection separating_direction(const std::vector<Vec>& polytope, const Vec& vertex);

}  // namespace vorder
