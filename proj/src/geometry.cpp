#include "vorder/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace vorder {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

bool polygon_contains(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x_cross = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

std::vector<std::array<int, 3>> ear_clip(const std::vector<Vec2>& poly) {
  const int n = static_cast<int>(poly.size());
  if (n < 3) throw Error(ErrorKind::Geometry, "polygon needs at least 3 vertices");
  auto cross = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  };
  double area2 = 0.0;
  for (int i = 0; i < n; ++i) area2 += cross(Vec2::Zero(), poly[i], poly[(i + 1) % n]);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (area2 < 0.0) std::reverse(idx.begin(), idx.end());

  auto min_angle = [&](int a, int b, int c) {
    const Vec2* p[3] = {&poly[a], &poly[b], &poly[c]};
    double m = kPi;
    for (int k = 0; k < 3; ++k) {
      const Vec2 u = *p[(k + 1) % 3] - *p[k], v = *p[(k + 2) % 3] - *p[k];
      m = std::min(m, std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
    }
    return m;
  };

  std::vector<std::array<int, 3>> out;
  while (idx.size() > 3) {
    const int m = static_cast<int>(idx.size());
    int best = -1;
    double best_angle = -1.0;
    for (int k = 0; k < m; ++k) {
      const int a = idx[(k + m - 1) % m], b = idx[k], c = idx[(k + 1) % m];
      const double scale = (poly[a] - poly[b]).norm() * (poly[c] - poly[b]).norm();
      if (cross(poly[a], poly[b], poly[c]) <= 1e-14 * scale) continue;
      bool blocked = false;
      for (int j : idx) {
        if (j == a || j == b || j == c) continue;
        if (cross(poly[a], poly[b], poly[j]) >= 0.0 && cross(poly[b], poly[c], poly[j]) >= 0.0 &&
            cross(poly[c], poly[a], poly[j]) >= 0.0) {
          blocked = true;
          break;
        }
      }
      if (blocked) continue;
      const double ang = min_angle(a, b, c);
      if (ang > best_angle + 1e-12) {
        best_angle = ang;
        best = k;
      }
    }
    if (best < 0) throw Error(ErrorKind::Geometry, "polygon is self-intersecting or degenerate");
    out.push_back({idx[(best + m - 1) % m], idx[best], idx[(best + 1) % m]});
    idx.erase(idx.begin() + best);
  }
  if (cross(poly[idx[0]], poly[idx[1]], poly[idx[2]]) <= 0.0)
    throw Error(ErrorKind::Geometry, "polygon is degenerate");
  out.push_back({idx[0], idx[1], idx[2]});
  return out;
}

// --------------------------------------------------------------------------
// Inclusion

int Inclusion::dim() const {
  return std::visit(Overloaded{[](const Ball& b) { return static_cast<int>(b.center.size()); },
                               [](const Simplex& s) { return static_cast<int>(s.base.size()); },
                               [](const Box& b) { return static_cast<int>(b.center.size()); }},
                    shape);
}

const char* Inclusion::kind() const {
  return std::visit(Overloaded{[](const Ball&) { return "ball"; }, [](const Simplex&) { return "simplex"; },
                               [](const Box&) { return "box"; }},
                    shape);
}

bool Inclusion::contains(const Vec& x) const {
  return std::visit(
      Overloaded{[&](const Ball& b) { return (x - b.center).norm() < b.radius; },
                 [&](const Simplex& s) {
                   const Vec lambda = s.matrix.partialPivLu().solve(x - s.base);
                   return (lambda.array() > 0.0).all() && lambda.sum() < 1.0;
                 },
                 [&](const Box& b) { return ((x - b.center).cwiseAbs().array() < 0.5 * b.widths.array()).all(); }},
      shape);
}

std::vector<Vec> Inclusion::vertices() const {
  return std::visit(Overloaded{[](const Ball&) { return std::vector<Vec>{}; },
                               [](const Simplex& s) {
                                 std::vector<Vec> out{s.base};
                                 for (Eigen::Index j = 0; j < s.matrix.cols(); ++j)
                                   out.push_back(s.base + s.matrix.col(j));
                                 return out;
                               },
                               [](const Box& b) {
                                 const auto d = b.center.size();
                                 std::vector<Vec> out;
                                 for (long mask = 0; mask < (1L << d); ++mask) {
                                   Vec v = b.center;
                                   for (Eigen::Index k = 0; k < d; ++k)
                                     v[k] += ((mask >> k) & 1 ? 0.5 : -0.5) * b.widths[k];
                                   out.push_back(v);
                                 }
                                 return out;
                               }},
                    shape);
}

double Inclusion::volume() const {
  return std::visit(Overloaded{[](const Ball& b) {
                                 const double d = static_cast<double>(b.center.size());
                                 return std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d + 1.0) *
                                        std::pow(b.radius, d);
                               },
                               [](const Simplex& s) {
                                 return std::abs(s.matrix.determinant()) / std::tgamma(s.base.size() + 1.0);
                               },
                               [](const Box& b) { return b.widths.prod(); }},
                    shape);
}

double Inclusion::max_norm() const {
  if (const auto* b = std::get_if<Ball>(&shape)) return b->center.norm() + b->radius;
  double m = 0.0;
  for (const Vec& v : vertices()) m = std::max(m, v.norm());
  return m;
}

void Inclusion::validate() const {
  if (!(amplitude > -1.0 && amplitude < 1.0)) throw Error(ErrorKind::Domain, "inclusion amplitude must lie in (-1, 1)");
  std::visit(Overloaded{[](const Ball& b) {
                          if (b.center.size() < 2 || !all_finite(b.center))
                            throw Error(ErrorKind::Domain, "ball center must be a finite vector of dimension >= 2");
                          if (!(b.radius > 0.0) || !std::isfinite(b.radius))
                            throw Error(ErrorKind::Domain, "ball radius must be positive");
                        },
                        [](const Simplex& s) {
                          const auto d = s.base.size();
                          if (d < 2 || s.matrix.rows() != d || s.matrix.cols() != d)
                            throw Error(ErrorKind::Domain, "simplex matrix must be d x d with d >= 2");
                          if (!all_finite(s.base) || !s.matrix.allFinite())
                            throw Error(ErrorKind::Domain, "simplex data must be finite");
                          if (!(s.matrix.determinant() > 0.0))
                            throw Error(ErrorKind::Domain, "simplex matrix must have positive determinant");
                        },
                        [](const Box& b) {
                          if (b.center.size() < 2 || b.widths.size() != b.center.size())
                            throw Error(ErrorKind::Domain, "box center and widths must share a dimension >= 2");
                          if (!all_finite(b.center) || !((b.widths.array() > 0.0).all()) || !all_finite(b.widths))
                            throw Error(ErrorKind::Domain, "box widths must be positive");
                        }},
             shape);
}

Inclusion make_ball(Vec center, double radius, double amplitude) {
  Inclusion inc{Ball{std::move(center), radius}, amplitude};
  inc.validate();
  return inc;
}

Inclusion make_simplex(Vec base, Mat matrix, double amplitude) {
  Inclusion inc{Simplex{std::move(base), std::move(matrix)}, amplitude};
  inc.validate();
  return inc;
}

Inclusion make_simplex_from_vertices(const std::vector<Vec>& vertices, double amplitude) {
  if (vertices.size() < 3) throw Error(ErrorKind::Domain, "a simplex needs d + 1 >= 3 vertices");
  const auto d = vertices.front().size();
  if (static_cast<std::size_t>(d) + 1 != vertices.size())
    throw Error(ErrorKind::Domain, "simplex vertex count must be dimension + 1");
  Mat m(d, d);
  for (Eigen::Index j = 0; j < d; ++j) m.col(j) = vertices[j + 1] - vertices[0];
  if (m.determinant() < 0.0) m.col(0).swap(m.col(1));
  return make_simplex(vertices[0], std::move(m), amplitude);
}

Inclusion make_box(Vec center, Vec widths, double amplitude) {
  Inclusion inc{Box{std::move(center), std::move(widths)}, amplitude};
  inc.validate();
  return inc;
}

// --------------------------------------------------------------------------
// Domain

Domain::Domain(DiskDomain disk) : kind_(std::move(disk)) {
  const auto& d = std::get<DiskDomain>(kind_);
  if (d.center.size() < 2 || !(d.radius > 0.0)) throw Error(ErrorKind::Domain, "disk domain needs dim >= 2 and radius > 0");
}

Domain::Domain(PolygonDomain polygon) : kind_(std::move(polygon)) {
  auto& p = std::get<PolygonDomain>(kind_).vertices;
  if (p.size() < 3) throw Error(ErrorKind::Domain, "polygon domain needs at least 3 vertices");
  double area2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % p.size()];
    area2 += a.x() * b.y() - a.y() * b.x();
  }
  if (std::abs(area2) < 1e-14) throw Error(ErrorKind::Domain, "degenerate polygon domain");
  if (area2 < 0.0) std::reverse(p.begin(), p.end());
}

Domain Domain::unit_disk(int dim) { return Domain(DiskDomain{Vec::Zero(dim), 1.0}); }

int Domain::dim() const {
  if (const auto* d = std::get_if<DiskDomain>(&kind_)) return static_cast<int>(d->center.size());
  return 2;
}

bool Domain::contains(const Vec& x) const { return inner_distance(x) > 0.0; }

double Domain::inner_distance(const Vec& x) const {
  if (const auto* d = std::get_if<DiskDomain>(&kind_)) return d->radius - (x - d->center).norm();
  const auto& poly = std::get<PolygonDomain>(kind_).vertices;
  const Vec2 p(x[0], x[1]);
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i)
    dist = std::min(dist, segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
  return polygon_contains(poly, p) ? dist : -dist;
}

bool Domain::contains_closure(const Inclusion& inc) const {
  if (inc.dim() != dim()) return false;
  if (const auto* b = std::get_if<Ball>(&inc.shape)) return inner_distance(b->center) > b->radius;
  const auto verts = inc.vertices();
  for (const Vec& v : verts)
    if (!(inner_distance(v) > 0.0)) return false;
  if (is_disk()) return true;  // convex domain: hull of interior points is interior
  // Non-convex polygon: sample the edges between every vertex pair.
  for (std::size_t i = 0; i < verts.size(); ++i)
    for (std::size_t j = i + 1; j < verts.size(); ++j)
      for (int s = 1; s < 64; ++s) {
        const double t = s / 64.0;
        if (!(inner_distance((1.0 - t) * verts[i] + t * verts[j]) > 0.0)) return false;
      }
  return true;
}

bool operator==(const Domain& a, const Domain& b) {
  if (a.kind_.index() != b.kind_.index()) return false;
  if (a.is_disk()) return a.disk().center == b.disk().center && a.disk().radius == b.disk().radius;
  return a.polygon().vertices == b.polygon().vertices;
}

// --------------------------------------------------------------------------
// Background and OrderField

double GridBackground::operator()(const Vec& x) const {
  const Eigen::Index nx = values.rows();
  const Eigen::Index ny = values.cols();
  auto locate = [](double v, double lo, double hi, Eigen::Index n, Eigen::Index& i, double& t) {
    const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0) * static_cast<double>(n - 1);
    i = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(s)), n - 2);
    t = s - static_cast<double>(i);
  };
  Eigen::Index i = 0, j = 0;
  double tx = 0.0, ty = 0.0;
  locate(x[0], lower.x(), upper.x(), nx, i, tx);
  locate(x[1], lower.y(), upper.y(), ny, j, ty);
  return (1 - tx) * (1 - ty) * values(i, j) + tx * (1 - ty) * values(i + 1, j) + (1 - tx) * ty * values(i, j + 1) +
         tx * ty * values(i + 1, j + 1);
}

bool operator==(const GridBackground& a, const GridBackground& b) {
  return a.lower == b.lower && a.upper == b.upper && a.values.rows() == b.values.rows() &&
         a.values.cols() == b.values.cols() && a.values == b.values;
}

double OrderField::background_at(const Vec& x) const {
  if (const auto* c = std::get_if<double>(&background)) return *c;
  return std::get<GridBackground>(background)(x);
}

double OrderField::operator()(const Vec& x) const {
  double value = background_at(x);
  for (const auto& inc : inclusions)
    if (inc.contains(x)) value += inc.amplitude;
  return value;
}

bool OrderField::same_background(const OrderField& other) const {
  if (dim != other.dim || !(domain == other.domain)) return false;
  return background == other.background;
}

void OrderField::validate() const {
  if (dim < 2) throw Error(ErrorKind::Domain, "order field dimension must be >= 2");
  if (domain.dim() != dim) throw Error(ErrorKind::Domain, "domain dimension does not match order field");
  if (const auto* g = std::get_if<GridBackground>(&background)) {
    if (dim != 2) throw Error(ErrorKind::Domain, "grid background is planar only");
    if (g->values.rows() < 2 || g->values.cols() < 2) throw Error(ErrorKind::Domain, "grid background needs 2x2 samples");
    if (!((g->upper - g->lower).array() > 0.0).all()) throw Error(ErrorKind::Domain, "grid background box is empty");
  }
  for (const auto& inc : inclusions) {
    inc.validate();
    if (inc.dim() != dim) throw Error(ErrorKind::Domain, "inclusion dimension does not match order field");
  }
}

Mat orthonormal_basis_with_first(const Vec& first) {
  const auto d = first.size();
  if (d < 2 || !(first.norm() > 0.0)) throw Error(ErrorKind::Domain, "basis seed must be a nonzero vector, d >= 2");
  Mat basis(d, d);
  basis.row(0) = first.normalized().transpose();
  Eigen::Index filled = 1;
  for (Eigen::Index k = 0; k < d && filled < d; ++k) {
    Vec v = Vec::Unit(d, k);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index r = 0; r < filled; ++r) v -= basis.row(r).dot(v) * basis.row(r).transpose();
    if (v.norm() > 1e-8) basis.row(filled++) = v.normalized().transpose();
  }
  return basis;
}

}  // namespace vorder
