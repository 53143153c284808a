#pragma once

#include <array>
#include <variant>
#include <vector>

#include "vorder/core.hpp"

namespace vorder {

// ---------------------------------------------------------------------------
// Inclusion shapes. Simplex{base, matrix} is base + matrix * (unit simplex); the
// columns of `matrix` are the edge vectors leaving `base`.
// ---------------------------------------------------------------------------

struct Ball {
  Vec center;
  double radius = 0.0;
};

struct Simplex {
  Vec base;
  Mat matrix;
};

struct Box {
  Vec center;
  Vec widths;
};

using Shape = std::variant<Ball, Simplex, Box>;

struct Inclusion {
  Shape shape;
  double amplitude = 0.0;

  int dim() const;
  const char* kind() const;

  /// Open-set membership; points on the boundary are outside.
  bool contains(const Vec& x) const;

  /// Corner points for simplices and boxes; empty for balls.
  std::vector<Vec> vertices() const;

  /// Lebesgue measure of the shape.
  double volume() const;

  /// Radius of the smallest ball around the origin containing the shape.
  double max_norm() const;

  /// Throws a domain error when the shape or amplitude is invalid.
  void validate() const;
};

Inclusion make_ball(Vec center, double radius, double amplitude);
Inclusion make_simplex(Vec base, Mat matrix, double amplitude);
Inclusion make_simplex_from_vertices(const std::vector<Vec>& vertices, double amplitude);
Inclusion make_box(Vec center, Vec widths, double amplitude);

// ---------------------------------------------------------------------------
// Domain: a ball in any dimension or a counter-clockwise polygon in the plane.
// ---------------------------------------------------------------------------

struct DiskDomain {
  Vec center;
  double radius = 1.0;
};

struct PolygonDomain {
  std::vector<Vec2> vertices;
};

class Domain {
 public:
  Domain() = default;
  explicit Domain(DiskDomain disk);
  explicit Domain(PolygonDomain polygon);

  static Domain unit_disk(int dim = 2);

  int dim() const;
  bool is_disk() const { return std::holds_alternative<DiskDomain>(kind_); }
  const DiskDomain& disk() const { return std::get<DiskDomain>(kind_); }
  const PolygonDomain& polygon() const { return std::get<PolygonDomain>(kind_); }

  bool contains(const Vec& x) const;

  /// Distance from an interior point to the boundary (negative outside).
  double inner_distance(const Vec& x) const;

  /// True when the closure of the inclusion lies strictly inside the domain.
  bool contains_closure(const Inclusion& inc) const;

  friend bool operator==(const Domain& a, const Domain& b);

 private:
  std::variant<DiskDomain, PolygonDomain> kind_ = DiskDomain{Vec::Zero(2), 1.0};
};

// ---------------------------------------------------------------------------
// OrderField: background order plus amplitudes on inclusions.
// ---------------------------------------------------------------------------

/// Bilinear samples on a rectangle; only meaningful in the plane.
struct GridBackground {
  Vec2 lower;
  Vec2 upper;
  Mat values;  // rows along x, columns along y

  double operator()(const Vec& x) const;
  friend bool operator==(const GridBackground& a, const GridBackground& b);
};

using Background = std::variant<double, GridBackground>;

struct OrderField {
  int dim = 2;
  Domain domain;
  Background background = 0.5;
  std::vector<Inclusion> inclusions;

  double background_at(const Vec& x) const;
  double operator()(const Vec& x) const;

  bool same_background(const OrderField& other) const;

  /// Checks dimensions and shapes; does not check the order-bound assumption.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Plane polygon helpers
// ---------------------------------------------------------------------------

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

/// Even-odd rule; boundary points may land on either side.
bool polygon_contains(const std::vector<Vec2>& poly, const Vec2& p);

/// Triangulation of a simple polygon by ear clipping, counter-clockwise triples of vertex
/// indices. At each step the ear with the largest minimum angle is cut, so the result is
/// deterministic.
std::vector<std::array<int, 3>> ear_clip(const std::vector<Vec2>& poly);

/// Gram-Schmidt completion of `first` to an orthonormal basis (rows).
Mat orthonormal_basis_with_first(const Vec& first);

}  // namespace vorder
