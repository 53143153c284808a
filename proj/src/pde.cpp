#include "vorder/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "vorder/moments.hpp"
#include "vorder/oracle.hpp"
#include "vorder/specfun.hpp"

namespace vorder {

namespace {

double cross(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

double factorial(int k) { return std::tgamma(k + 1.0); }

void finish_mesh(Mesh& m) {
  for (auto& t : m.triangles)
    if (cross(m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]]) < 0.0) std::swap(t[1], t[2]);

  std::map<std::pair<int, int>, int> count;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  m.on_boundary.assign(m.nodes.size(), false);
  m.boundary_edges.clear();
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      if (count[{std::min(a, b), std::max(a, b)}] != 1) continue;
      const Vec2 d = m.nodes[b] - m.nodes[a];
      BoundaryEdge be;
      be.a = a;
      be.b = b;
      be.length = d.norm();
      be.normal = Vec2(d.y(), -d.x()) / be.length;
      m.boundary_edges.push_back(be);
      m.on_boundary[a] = m.on_boundary[b] = true;
    }
}

MeshPtr disk_mesh(const DiskDomain& disk, double h) {
  const double R = disk.radius;
  const Vec2 c(disk.center[0], disk.center[1]);
  // Rings k = 1..n carry 6k nodes; the longest edges are the outer chords and the
  // slanted edges between rings, both about 1.1 R/n.
  int n = std::max(1, static_cast<int>(std::ceil(R / h)));
  for (;; ++n) {
    if (n > 5000) throw Error(ErrorKind::Mesh, "mesh size too small for the domain");
    auto mesh = std::make_shared<Mesh>();
    mesh->nodes.push_back(c);
    std::vector<int> start(n + 1, 0);
    for (int k = 1; k <= n; ++k) {
      start[k] = static_cast<int>(mesh->nodes.size());
      const double r = R * k / n;
      for (int j = 0; j < 6 * k; ++j) {
        const double phi = 2.0 * kPi * j / (6.0 * k);
        mesh->nodes.push_back(c + r * Vec2(std::cos(phi), std::sin(phi)));
      }
    }
    for (int j = 0; j < 6; ++j) mesh->triangles.push_back({0, start[1] + j, start[1] + (j + 1) % 6});
    for (int k = 2; k <= n; ++k) {
      const int a = 6 * (k - 1), b = 6 * k;
      int i = 0, j = 0;
      while (i < a || j < b) {
        const bool outer = i == a || (j < b && (j + 1.0) / b <= (i + 1.0) / a);
        const int in0 = start[k - 1] + i % a, out0 = start[k] + j % b;
        if (outer) {
          mesh->triangles.push_back({in0, out0, start[k] + (j + 1) % b});
          ++j;
        } else {
          mesh->triangles.push_back({in0, out0, start[k - 1] + (i + 1) % a});
          ++i;
        }
      }
    }
    finish_mesh(*mesh);
    if (mesh->max_edge() <= h) return mesh;
  }
}

MeshPtr polygon_mesh(const PolygonDomain& poly, double h) {
  const auto& P = poly.vertices;
  const auto coarse = ear_clip(P);
  double longest = 0.0;
  for (const auto& t : coarse)
    for (int e = 0; e < 3; ++e) longest = std::max(longest, (P[t[e]] - P[t[(e + 1) % 3]]).norm());
  const int m = std::max(1, static_cast<int>(std::ceil(longest / h - 1e-12)));
  if (static_cast<double>(m) * m * coarse.size() > 2e7) throw Error(ErrorKind::Mesh, "mesh size too small for the domain");

  auto mesh = std::make_shared<Mesh>();
  // Nodes on coarse vertices and coarse edges are keyed combinatorially so neighbours share them.
  std::map<std::array<int, 3>, int> shared;
  auto node_for = [&](const std::array<int, 3>& tri, const std::array<int, 3>& w) -> int {
    int nz = 0;
    for (int v : w) nz += v > 0;
    if (nz == 3) {
      Vec2 x = (w[0] * P[tri[0]] + w[1] * P[tri[1]] + w[2] * P[tri[2]]) / m;
      mesh->nodes.push_back(x);
      return static_cast<int>(mesh->nodes.size()) - 1;
    }
    std::array<int, 3> key;
    if (nz == 1) {
      const int v = w[0] ? tri[0] : (w[1] ? tri[1] : tri[2]);
      key = {v, -1, 0};
    } else {
      int ia = -1, ib = -1;
      for (int k = 0; k < 3; ++k)
        if (w[k]) (ia < 0 ? ia : ib) = k;
      int va = tri[ia], vb = tri[ib], wa = w[ia];
      if (va > vb) {
        std::swap(va, vb);
        wa = m - wa;
      }
      key = {va, vb, wa};
    }
    auto it = shared.find(key);
    if (it != shared.end()) return it->second;
    Vec2 x;
    if (key[1] < 0) x = P[key[0]];
    else x = P[key[0]] + (static_cast<double>(m - key[2]) / m) * (P[key[1]] - P[key[0]]);
    mesh->nodes.push_back(x);
    const int id = static_cast<int>(mesh->nodes.size()) - 1;
    shared[key] = id;
    return id;
  };

  for (const auto& tri : coarse) {
    std::vector<std::vector<int>> id(m + 1);
    for (int i = 0; i <= m; ++i) {
      id[i].resize(m + 1 - i);
      for (int j = 0; i + j <= m; ++j) id[i][j] = node_for(tri, {m - i - j, i, j});
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; i + j < m; ++j) {
        mesh->triangles.push_back({id[i][j], id[i + 1][j], id[i][j + 1]});
        if (i + j + 1 < m) mesh->triangles.push_back({id[i + 1][j], id[i + 1][j + 1], id[i][j + 1]});
      }
  }
  finish_mesh(*mesh);
  return mesh;
}

// Quadrature points of the reaction term. Barycentric values double as P1 shape values.
struct QPoint {
  int tri;
  double weight;
  std::array<double, 3> phi;
  Vec2 x;
};

void midpoint_rule(const Mesh& mesh, int t, const std::array<Vec2, 3>& lam, double area, std::vector<QPoint>& out) {
  const auto& tri = mesh.triangles[t];
  for (int e = 0; e < 3; ++e) {
    const Vec2 l = 0.5 * (lam[e] + lam[(e + 1) % 3]);
    QPoint q;
    q.tri = t;
    q.weight = area / 3.0;
    q.phi = {1.0 - l.x() - l.y(), l.x(), l.y()};
    q.x = q.phi[0] * mesh.nodes[tri[0]] + q.phi[1] * mesh.nodes[tri[1]] + q.phi[2] * mesh.nodes[tri[2]];
    out.push_back(q);
  }
}

// lam holds (φ₁, φ₂) coordinates of a sub-triangle of element t.
void subdivided_rule(const Mesh& mesh, int t, const std::array<Vec2, 3>& lam, double area,
                     const std::function<double(const Vec2&)>& iface, int depth, std::vector<QPoint>& out) {
  const auto& tri = mesh.triangles[t];
  auto phys = [&](const Vec2& l) {
    return (1.0 - l.x() - l.y()) * mesh.nodes[tri[0]] + l.x() * mesh.nodes[tri[1]] + l.y() * mesh.nodes[tri[2]];
  };
  const Vec2 a = phys(lam[0]), b = phys(lam[1]), c = phys(lam[2]);
  const Vec2 g = (a + b + c) / 3.0;
  const double reach = std::max({(a - g).norm(), (b - g).norm(), (c - g).norm()});
  if (depth == 0 || std::abs(iface(g)) > reach) {
    midpoint_rule(mesh, t, lam, area, out);
    return;
  }
  const Vec2 ab = 0.5 * (lam[0] + lam[1]), bc = 0.5 * (lam[1] + lam[2]), ca = 0.5 * (lam[2] + lam[0]);
  for (const auto& sub : {std::array<Vec2, 3>{lam[0], ab, ca}, std::array<Vec2, 3>{ab, lam[1], bc},
                          std::array<Vec2, 3>{ca, bc, lam[2]}, std::array<Vec2, 3>{bc, ca, ab}})
    subdivided_rule(mesh, t, sub, 0.25 * area, iface, depth - 1, out);
}

std::vector<QPoint> reaction_points(const Mesh& mesh, const std::function<double(const Vec2&)>& iface, int depth) {
  std::vector<QPoint> out;
  out.reserve(3 * mesh.triangles.size());
  const std::array<Vec2, 3> ref = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (iface) subdivided_rule(mesh, t, ref, mesh.area(t), iface, depth, out);
    else midpoint_rule(mesh, t, ref, mesh.area(t), out);
  }
  return out;
}

Eigen::SparseMatrix<double> stiffness(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.triangles.size());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.area(t);
    Vec2 grad[3];
    for (int i = 0; i < 3; ++i) {
      const Vec2& p1 = mesh.nodes[tri[(i + 1) % 3]];
      const Vec2& p2 = mesh.nodes[tri[(i + 2) % 3]];
      grad[i] = Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / (2.0 * area);
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], area * grad[i].dot(grad[j]));
  }
  Eigen::SparseMatrix<double> K(mesh.num_nodes(), mesh.num_nodes());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

// K + Σ w q φ_i φ_j with q evaluated per point.
template <class Points, class Q>
Eigen::SparseMatrix<Complex> assemble(const Mesh& mesh, const Eigen::SparseMatrix<double>& K, const Points& pts,
                                      Q&& q) {
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(K.nonZeros() + 9 * mesh.triangles.size());
  for (int c = 0; c < K.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  std::size_t i = 0;
  while (i < pts.size()) {
    const int t = pts[i].tri;
    Complex local[3][3] = {};
    for (; i < pts.size() && pts[i].tri == t; ++i) {
      const Complex wq = pts[i].weight * q(i);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) local[a][b] += wq * pts[i].phi[a] * pts[i].phi[b];
    }
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(tri[a], tri[b], local[a][b]);
  }
  Eigen::SparseMatrix<Complex> A(mesh.num_nodes(), mesh.num_nodes());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

void check_reaction_value(Complex q) {
  if (!std::isfinite(q.real()) || !std::isfinite(q.imag()) || (q.imag() == 0.0 && q.real() <= 0.0))
    throw Error(ErrorKind::Domain, "reaction coefficient on (-inf, 0]");
}

void check_off_cut(Complex p) {
  if (!std::isfinite(p.real()) || !std::isfinite(p.imag()) || (p.imag() == 0.0 && p.real() <= 0.0))
    throw Error(ErrorKind::Domain, "Laplace variable on the cut (-inf, 0]");
}

FemField dirichlet_solve(const MeshPtr& mesh, const Eigen::SparseMatrix<Complex>& A, const CVec& load,
                         const CVec& boundary, const SolverOptions& opts) {
  const int n = mesh->num_nodes();
  std::vector<int> map(n, -1);
  int ni = 0;
  for (int i = 0; i < n; ++i)
    if (!mesh->on_boundary[i]) map[i] = ni++;

  CVec u = CVec::Zero(n);
  for (int i = 0; i < n; ++i)
    if (mesh->on_boundary[i]) u[i] = boundary[i];

  std::vector<Eigen::Triplet<Complex>> trip;
  CVec rhs(ni);
  for (int i = 0; i < n; ++i)
    if (map[i] >= 0) rhs[map[i]] = load[i];
  bool real = true;
  for (int c = 0; c < A.outerSize(); ++c)
    for (Eigen::SparseMatrix<Complex>::InnerIterator it(A, c); it; ++it) {
      const int r = map[it.row()];
      if (r < 0) continue;
      if (it.value().imag() != 0.0) real = false;
      if (map[it.col()] >= 0) trip.emplace_back(r, map[it.col()], it.value());
      else rhs[r] -= it.value() * u[it.col()];
    }
  Eigen::SparseMatrix<Complex> Aii(ni, ni);
  Aii.setFromTriplets(trip.begin(), trip.end());

  CVec x = CVec::Zero(ni);
  if (ni > 0 && rhs.norm() > 0.0) {
    if (real) {
      const Eigen::SparseMatrix<double> Ar = Aii.real();
      Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
      cg.setTolerance(opts.tol);
      cg.setMaxIterations(opts.max_iterations);
      cg.compute(Ar);
      const Vec br = rhs.real(), bi = rhs.imag();
      Vec xr = Vec::Zero(ni), xi = Vec::Zero(ni);
      if (br.norm() > 0.0) xr = cg.solve(br);
      if (bi.norm() > 0.0) xi = cg.solve(bi);
      x.real() = xr;
      x.imag() = xi;
    } else {
      // Equivalent real block system [Ar -Ai; Ai Ar].
      std::vector<Eigen::Triplet<double>> bt;
      bt.reserve(4 * Aii.nonZeros());
      for (int c = 0; c < Aii.outerSize(); ++c)
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(Aii, c); it; ++it) {
          const int r = static_cast<int>(it.row()), col = static_cast<int>(it.col());
          const double re = it.value().real(), im = it.value().imag();
          bt.emplace_back(r, col, re);
          bt.emplace_back(r + ni, col + ni, re);
          if (im != 0.0) {
            bt.emplace_back(r, col + ni, -im);
            bt.emplace_back(r + ni, col, im);
          }
        }
      Eigen::SparseMatrix<double> B(2 * ni, 2 * ni);
      B.setFromTriplets(bt.begin(), bt.end());
      B.makeCompressed();
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(B);
      if (lu.info() != Eigen::Success) throw Error(ErrorKind::Numerics, "sparse factorisation failed");
      Vec b(2 * ni);
      b << rhs.real(), rhs.imag();
      Vec y = lu.solve(b);
      // One step of refinement removes most of the pivoting error.
      y += lu.solve(Vec(b - B * y));
      x.real() = y.head(ni);
      x.imag() = y.tail(ni);
    }
    const double rel = (Aii * x - rhs).norm() / rhs.norm();
    if (!(rel <= opts.contract_tol))
      throw Error(ErrorKind::Numerics, "linear solve residual " + std::to_string(rel) + " above contract");
  }
  for (int i = 0; i < n; ++i)
    if (map[i] >= 0) u[i] = x[map[i]];

  FemField f;
  f.mesh = mesh;
  f.values = u;
  f.residual = A * u - load;
  return f;
}

CVec nodal(const Mesh& mesh, const ScalarField& g, bool boundary_only) {
  CVec v = CVec::Zero(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (!boundary_only || mesh.on_boundary[i]) v[i] = g(mesh.nodes[i]);
  return v;
}

}  // namespace

// --------------------------------------------------------------------------
// Mesh

double Mesh::area(int t) const {
  const auto& tri = triangles[t];
  return 0.5 * cross(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
}

double Mesh::max_edge() const {
  double m = 0.0;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) m = std::max(m, (nodes[t[e]] - nodes[t[(e + 1) % 3]]).norm());
  return m;
}

double Mesh::min_area() const {
  double m = std::numeric_limits<double>::infinity();
  for (int t = 0; t < num_triangles(); ++t) m = std::min(m, area(t));
  return m;
}

int Mesh::num_edges() const {
  std::map<std::pair<int, int>, int> seen;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      seen[{std::min(a, b), std::max(a, b)}] = 1;
    }
  return static_cast<int>(seen.size());
}

int Mesh::locate(const Vec2& x) const {
  if (bucket_n_ == 0) {
    Vec2 lo = nodes[0], hi = nodes[0];
    for (const auto& p : nodes) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    bucket_n_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(triangles.size()) / 2.0)));
    bucket_lo_ = lo;
    bucket_size_ = (hi - lo) / bucket_n_ + Vec2::Constant(1e-12);
    buckets_.assign(static_cast<std::size_t>(bucket_n_) * bucket_n_, {});
    for (int t = 0; t < num_triangles(); ++t) {
      Vec2 tl = nodes[triangles[t][0]], th = tl;
      for (int k = 1; k < 3; ++k) {
        tl = tl.cwiseMin(nodes[triangles[t][k]]);
        th = th.cwiseMax(nodes[triangles[t][k]]);
      }
      const int i0 = std::clamp(static_cast<int>((tl.x() - lo.x()) / bucket_size_.x()), 0, bucket_n_ - 1);
      const int i1 = std::clamp(static_cast<int>((th.x() - lo.x()) / bucket_size_.x()), 0, bucket_n_ - 1);
      const int j0 = std::clamp(static_cast<int>((tl.y() - lo.y()) / bucket_size_.y()), 0, bucket_n_ - 1);
      const int j1 = std::clamp(static_cast<int>((th.y() - lo.y()) / bucket_size_.y()), 0, bucket_n_ - 1);
      for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j) buckets_[i * bucket_n_ + j].push_back(t);
    }
  }
  const int i = static_cast<int>(std::floor((x.x() - bucket_lo_.x()) / bucket_size_.x()));
  const int j = static_cast<int>(std::floor((x.y() - bucket_lo_.y()) / bucket_size_.y()));
  if (i < 0 || j < 0 || i >= bucket_n_ || j >= bucket_n_) return -1;
  for (int t : buckets_[i * bucket_n_ + j]) {
    const auto& tri = triangles[t];
    const double a2 = 2.0 * area(t), tol = -1e-12 * a2;
    if (cross(nodes[tri[0]], nodes[tri[1]], x) >= tol && cross(nodes[tri[1]], nodes[tri[2]], x) >= tol &&
        cross(nodes[tri[2]], nodes[tri[0]], x) >= tol)
      return t;
  }
  return -1;
}

MeshPtr build_mesh(const Domain& domain, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::Mesh, "mesh size must be positive");
  if (domain.dim() != 2) throw Error(ErrorKind::Mesh, "the finite-element mesh is two-dimensional");
  MeshPtr m = domain.is_disk() ? disk_mesh(domain.disk(), h) : polygon_mesh(domain.polygon(), h);
  if (m->boundary_edges.size() < 3 || !(m->min_area() > 0.0)) throw Error(ErrorKind::Mesh, "degenerate mesh");
  return m;
}

// --------------------------------------------------------------------------
// Fields

Complex FemField::evaluate(const Vec2& x) const {
  const int t = mesh->locate(x);
  if (t < 0) throw Error(ErrorKind::Domain, "point outside the mesh");
  const auto& tri = mesh->triangles[t];
  const auto& P = mesh->nodes;
  const double a2 = 2.0 * mesh->area(t);
  const double l1 = cross(P[tri[2]], P[tri[0]], x) / a2;
  const double l2 = cross(P[tri[0]], P[tri[1]], x) / a2;
  return (1.0 - l1 - l2) * values[tri[0]] + l1 * values[tri[1]] + l2 * values[tri[2]];
}

double FemField::l2_error(const ScalarField& exact) const {
  // Symmetric 6-point rule of degree 4.
  static const double A = 0.445948490915965, B = 0.091576213509771;
  static const double WA = 0.223381589678011, WB = 0.109951743655322;
  const double bary[6][3] = {{A, A, 1 - 2 * A}, {A, 1 - 2 * A, A}, {1 - 2 * A, A, A},
                             {B, B, 1 - 2 * B}, {B, 1 - 2 * B, B}, {1 - 2 * B, B, B}};
  double sum = 0.0;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const auto& tri = mesh->triangles[t];
    const double area = mesh->area(t);
    for (int q = 0; q < 6; ++q) {
      const Vec2 x = bary[q][0] * mesh->nodes[tri[0]] + bary[q][1] * mesh->nodes[tri[1]] + bary[q][2] * mesh->nodes[tri[2]];
      const Complex uh = bary[q][0] * values[tri[0]] + bary[q][1] * values[tri[1]] + bary[q][2] * values[tri[2]];
      sum += (q < 3 ? WA : WB) * area * std::norm(uh - exact(x));
    }
  }
  return std::sqrt(sum);
}

double FemField::h1_norm() const {
  double sum = 0.0;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const auto& tri = mesh->triangles[t];
    const double area = mesh->area(t);
    Eigen::Vector2cd grad = Eigen::Vector2cd::Zero();
    Complex s = 0.0;
    double sq = 0.0;
    for (int i = 0; i < 3; ++i) {
      const Vec2& p1 = mesh->nodes[tri[(i + 1) % 3]];
      const Vec2& p2 = mesh->nodes[tri[(i + 2) % 3]];
      grad += values[tri[i]] * Eigen::Vector2cd(p1.y() - p2.y(), p2.x() - p1.x()) / (2.0 * area);
      s += values[tri[i]];
      sq += std::norm(values[tri[i]]);
    }
    sum += area * grad.squaredNorm() + area / 12.0 * (sq + std::norm(s));
  }
  return std::sqrt(sum);
}

FemField interpolate(MeshPtr mesh, const ScalarField& f) {
  FemField u;
  u.values = nodal(*mesh, f, false);
  u.mesh = std::move(mesh);
  return u;
}

TestPanel exponential_panel(int count, double offset) {
  TestPanel panel;
  for (int j = 0; j < count; ++j) {
    const double a = offset + 2.0 * kPi * j / count;
    const Vec2 w(std::cos(a), std::sin(a));
    BoundaryTest t;
    t.label = "z" + std::to_string(j);
    t.psi = [w](const Vec2& x) { return Complex(std::exp(x.dot(w)), 0.0); };
    panel.push_back(std::move(t));
  }
  return panel;
}

TestPanel hat_panel(const Mesh& mesh, int count) {
  // Walk the boundary chain from its lowest-numbered node.
  std::map<int, const BoundaryEdge*> next;
  for (const auto& e : mesh.boundary_edges) next[e.a] = &e;
  std::vector<int> order;
  std::map<int, double> support;
  if (next.empty()) return {};
  int cur = next.begin()->first;
  for (std::size_t s = 0; s < next.size(); ++s) {
    const BoundaryEdge* e = next.at(cur);
    order.push_back(cur);
    support[e->a] += 0.5 * e->length;
    support[e->b] += 0.5 * e->length;
    cur = e->b;
  }
  TestPanel panel;
  const int n = static_cast<int>(order.size());
  for (int j = 0; j < count && j < n; ++j) {
    const int node = order[static_cast<std::size_t>(j) * n / count];
    BoundaryTest t;
    t.label = "hat" + std::to_string(node);
    t.node = node;
    t.weight = 1.0 / support[node];
    panel.push_back(std::move(t));
  }
  return panel;
}

FluxTrace boundary_flux(const FemField& u, const TestPanel& tests) {
  if (!u.has_residual()) throw Error(ErrorKind::Contract, "flux requested for a field without a Galerkin residual");
  FluxTrace out;
  out.values.resize(static_cast<Eigen::Index>(tests.size()));
  for (std::size_t j = 0; j < tests.size(); ++j) {
    out.labels.push_back(tests[j].label);
    if (tests[j].node >= 0) out.values[j] = tests[j].weight * u.residual[tests[j].node];
    else out.values[j] = tests[j].weight * boundary_flux(u, tests[j].psi);
  }
  return out;
}

Complex boundary_flux(const FemField& u, const ScalarField& extension) {
  if (!u.has_residual()) throw Error(ErrorKind::Contract, "flux requested for a field without a Galerkin residual");
  Complex s = 0.0;
  for (int i = 0; i < u.mesh->num_nodes(); ++i) s += extension(u.mesh->nodes[i]) * u.residual[i];
  return s;
}

// --------------------------------------------------------------------------
// Solvers

FemField solve_reaction_diffusion(MeshPtr mesh, const Coefficient& q, const Coefficient& source, const ScalarField& g,
                                  const SolverOptions& opts) {
  if (!q.value) throw Error(ErrorKind::Contract, "reaction coefficient missing");
  auto iface = q.interface_distance;
  if (source.interface_distance) {
    auto a = iface, b = source.interface_distance;
    iface = a ? std::function<double(const Vec2&)>([a, b](const Vec2& x) { return std::min(a(x), b(x)); }) : b;
  }
  const auto pts = reaction_points(*mesh, iface, opts.subdivision_depth);
  std::vector<Complex> qv(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    qv[i] = q.value(pts[i].x);
    check_reaction_value(qv[i]);
  }
  const auto A = assemble(*mesh, stiffness(*mesh), pts, [&](std::size_t i) { return qv[i]; });
  CVec load = CVec::Zero(mesh->num_nodes());
  if (source.value)
    for (const auto& p : pts) {
      const Complex f = p.weight * source.value(p.x);
      for (int a = 0; a < 3; ++a) load[mesh->triangles[p.tri][a]] += f * p.phi[a];
    }
  const CVec bnd = g ? nodal(*mesh, g, true) : CVec::Zero(mesh->num_nodes());
  return dirichlet_solve(mesh, A, load, bnd, opts);
}

void ExcitationSpec::validate() const {
  if (!(std::abs(omega0.norm() - 1.0) <= 1e-12)) throw Error(ErrorKind::Configuration, "omega0 must be a unit vector");
  if (k == 1) throw Error(ErrorKind::Configuration, "k = 1 is not an admissible excitation");
  if (k == 0 && !allow_k0) throw Error(ErrorKind::Configuration, "k = 0 requires the explicit override");
  if (k < 0) throw Error(ErrorKind::Configuration, "k must be a non-negative integer");
}

std::function<double(const Vec2&)> interface_distance(const OrderField& order) {
  if (order.inclusions.empty()) return {};
  std::vector<std::pair<Vec2, double>> circles;
  std::vector<std::pair<Vec2, Vec2>> segments;
  for (const Inclusion& inc : order.inclusions) {
    if (inc.dim() != 2) throw Error(ErrorKind::Unsupported, "finite elements need planar inclusions");
    if (const auto* b = std::get_if<Ball>(&inc.shape)) {
      circles.emplace_back(Vec2(b->center[0], b->center[1]), b->radius);
      continue;
    }
    auto v = inc.vertices();
    if (std::holds_alternative<Box>(inc.shape)) std::swap(v[2], v[3]);  // corners in cyclic order
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec& a = v[i];
      const Vec& b = v[(i + 1) % v.size()];
      segments.emplace_back(Vec2(a[0], a[1]), Vec2(b[0], b[1]));
    }
  }
  return [circles, segments](const Vec2& x) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& [c, r] : circles) d = std::min(d, std::abs((x - c).norm() - r));
    for (const auto& [a, b] : segments) d = std::min(d, segment_distance(x, a, b));
    return d;
  };
}

LaplaceFamily::LaplaceFamily(MeshPtr mesh, const OrderField& order, const SolverOptions& opts)
    : mesh_(std::move(mesh)), opts_(opts), stiffness_(stiffness(*mesh_)) {
  if (order.dim != 2) throw Error(ErrorKind::Unsupported, "finite elements need a planar order field");
  order.validate();
  const auto pts = reaction_points(*mesh_, interface_distance(order), opts.subdivision_depth);
  points_.reserve(pts.size());
  for (const auto& p : pts) points_.push_back({p.tri, p.weight, p.phi, order(p.x)});
}

Eigen::SparseMatrix<Complex> LaplaceFamily::matrix(Complex p) const {
  check_off_cut(p);
  double last_alpha = std::numeric_limits<double>::quiet_NaN();
  Complex last = 0.0;
  return assemble(*mesh_, stiffness_, points_, [&](std::size_t i) {
    const double a = points_[i].alpha;
    if (a != last_alpha) {
      last_alpha = a;
      last = principal_power(p, a);
    }
    return last;
  });
}

Eigen::SparseMatrix<Complex> LaplaceFamily::unit_matrix() const { return matrix(1.0); }

CVec LaplaceFamily::alpha_mass(const CVec& v) const {
  CVec out = CVec::Zero(mesh_->num_nodes());
  for (const auto& q : points_) {
    const auto& tri = mesh_->triangles[q.tri];
    const Complex val = q.phi[0] * v[tri[0]] + q.phi[1] * v[tri[1]] + q.phi[2] * v[tri[2]];
    for (int a = 0; a < 3; ++a) out[tri[a]] += q.weight * q.alpha * q.phi[a] * val;
  }
  return out;
}

FemField LaplaceFamily::solve_with(const Eigen::SparseMatrix<Complex>& A, const CVec& load, const CVec& bnd) const {
  return dirichlet_solve(mesh_, A, load, bnd, opts_);
}

FemField LaplaceFamily::solve(Complex p, const ExcitationSpec& exc) const {
  exc.validate();
  check_off_cut(p);
  const Complex scale = factorial(exc.k) * std::pow(p, -static_cast<double>(exc.k + 1));
  const Vec2 w = exc.omega0;
  const CVec bnd = nodal(*mesh_, [&](const Vec2& x) { return scale * std::exp(x.dot(w)); }, true);
  return solve_with(matrix(p), CVec::Zero(mesh_->num_nodes()), bnd);
}

FemField laplace_domain_solution(Complex p, const OrderField& order, const ExcitationSpec& exc, MeshPtr mesh) {
  return LaplaceFamily(std::move(mesh), order).solve(p, exc);
}

FluxTrace flux_panel(Complex p, const LaplaceFamily& family, const ExcitationSpec& exc, const TestPanel& tests) {
  return boundary_flux(family.solve(p, exc), tests);
}

Linearization linearized_flux_derivative(const LaplaceFamily& family, const ExcitationSpec& exc,
                                         const TestPanel& tests) {
  exc.validate();
  const auto& mesh = *family.mesh();
  const auto A = family.unit_matrix();
  const Vec2 w = exc.omega0;
  Linearization out;
  out.v0 = family.solve_with(A, CVec::Zero(mesh.num_nodes()),
                             nodal(mesh, [&](const Vec2& x) { return Complex(std::exp(x.dot(w))); }, true));
  out.v1 = family.solve_with(A, family.alpha_mass(out.v0.values), CVec::Zero(mesh.num_nodes()));
  const FluxTrace f0 = boundary_flux(out.v0, tests);
  const FluxTrace f1 = boundary_flux(out.v1, tests);
  out.derivative.labels = f0.labels;
  out.derivative.values = -factorial(exc.k + 1) * f0.values - factorial(exc.k) * f1.values;
  return out;
}

IdentityReport identity_residual(const OrderField& cfg1, const OrderField& cfg2, const ExcitationSpec& exc,
                                 MeshPtr mesh, const std::vector<Vec2>& directions, const SolverOptions& opts) {
  exc.validate();
  if (!cfg1.same_background(cfg2) || !(cfg1.domain == cfg2.domain))
    throw Error(ErrorKind::Unsupported, "identity needs a shared background and domain");
  const LaplaceFamily f1(mesh, cfg1, opts), f2(mesh, cfg2, opts);
  const auto A = f1.unit_matrix();
  const Vec2 w0 = exc.omega0;
  const int n = mesh->num_nodes();
  const FemField v0 =
      f1.solve_with(A, CVec::Zero(n), nodal(*mesh, [&](const Vec2& x) { return Complex(std::exp(x.dot(w0))); }, true));
  const FemField a = f1.solve_with(A, f1.alpha_mass(v0.values), CVec::Zero(n));
  const FemField b = f2.solve_with(A, f2.alpha_mass(v0.values), CVec::Zero(n));
  FemField diff;
  diff.mesh = mesh;
  diff.values = a.values - b.values;
  diff.residual = a.residual - b.residual;

  IdentityReport rep;
  rep.directions = directions;
  const auto m = static_cast<Eigen::Index>(directions.size());
  rep.moment.resize(m);
  rep.pairing.resize(m);
  rep.residual.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Vec2 w = directions[j];
    rep.pairing[j] = boundary_flux(diff, [&](const Vec2& x) { return Complex(std::exp(x.dot(w))); });
    rep.moment[j] = difference_moment(cfg1, cfg2, to_complex(Vec(w + w0)));
    rep.residual[j] = std::abs(rep.moment[j] + rep.pairing[j]);
  }
  if (m > 0) {
    rep.max_residual = rep.residual.maxCoeff();
    rep.mean_residual = rep.residual.mean();
    rep.scale = rep.moment.cwiseAbs().maxCoeff();
  }
  return rep;
}

// --------------------------------------------------------------------------
// Time domain

Inversion invert_laplace(const std::function<CVec(Complex)>& F, double t, const ContourOptions& opts) {
  if (!(t > 0.0)) throw Error(ErrorKind::Domain, "inversion time must be positive");
  const int M = opts.nodes;
  if (M < 2) throw Error(ErrorKind::Configuration, "contour needs at least 2 nodes");
  const double r = 2.0 * M / (5.0 * t);
  CVec sum = F(r) * std::exp(r * t);
  for (int j = 1; j < M; ++j) {
    for (int s : {1, -1}) {
      const double th = s * j * kPi / M;
      const double cot = std::cos(th) / std::sin(th);
      const Complex p = r * th * Complex(cot, 1.0);
      if (p.imag() == 0.0 && p.real() <= 0.0) throw Error(ErrorKind::Configuration, "contour node on the cut");
      const double sigma = th + (th * cot - 1.0) * cot;
      sum += F(p) * (std::exp(p * t) * Complex(1.0, sigma));
    }
  }
  Inversion out;
  out.value = sum * (r / (2.0 * M));
  const double re = out.value.real().cwiseAbs().maxCoeff();
  const double im = out.value.imag().cwiseAbs().maxCoeff();
  out.imag_ratio = re > 0.0 ? im / re : im;
  return out;
}

TimeDomainFlux time_domain_flux(const LaplaceFamily& family, const ExcitationSpec& exc, const TestPanel& tests,
                                const Vec& times, const ContourOptions& opts) {
  exc.validate();
  TimeDomainFlux out;
  out.times = times;
  const auto nt = times.size();
  const auto nc = static_cast<Eigen::Index>(tests.size());
  out.values.resize(nt, nc);
  out.imaginary.resize(nt, nc);
  for (const auto& t : tests) out.labels.push_back(t.label);
  auto F = [&](Complex p) { return flux_panel(p, family, exc, tests).values; };
  for (Eigen::Index i = 0; i < nt; ++i) {
    const Inversion inv = invert_laplace(F, times[i], opts);
    out.values.row(i) = inv.value.real().transpose();
    out.imaginary.row(i) = inv.value.imag().transpose();
  }
  const double re = nt ? out.values.cwiseAbs().maxCoeff() : 0.0;
  const double im = nt ? out.imaginary.cwiseAbs().maxCoeff() : 0.0;
  out.max_imag_ratio = re > 0.0 ? im / re : im;
  return out;
}

RoundTrip laplace_round_trip(const LaplaceFamily& family, const ExcitationSpec& exc, const BoundaryTest& test,
                             double p, double T, const ContourOptions& opts) {
  if (!(p > 0.0) || !(T > 0.0)) throw Error(ErrorKind::Domain, "round trip needs p > 0 and T > 0");
  const TestPanel panel{test};
  RoundTrip out;
  out.direct = flux_panel(p, family, exc, panel).values[0];

  // Panels [0, T/256], [T/256, T/128], ..., [T/2, T].
  std::vector<double> breaks{0.0};
  for (int j = 8; j >= 0; --j) breaks.push_back(T / std::pow(2.0, j));

  ContourOptions half = opts;
  half.nodes = std::max(2, opts.nodes / 2);
  auto F = [&](Complex s) { return flux_panel(s, family, exc, panel).values; };

  auto integrate = [&](int order, bool with_coarse, double* inversion) {
    Complex sum = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double a = breaks[k], b = breaks[k + 1];
      const auto [x, w] = gauss_legendre(order, a, b);
      for (int i = 0; i < order; ++i) {
        const double f = invert_laplace(F, x[i], opts).value[0].real();
        sum += w[i] * std::exp(-p * x[i]) * f;
        if (with_coarse) {
          const double g = invert_laplace(F, x[i], half).value[0].real();
          *inversion += w[i] * std::exp(-p * x[i]) * std::abs(f - g);
        }
      }
    }
    return sum;
  };
  double inversion = 0.0;
  out.transformed = integrate(8, true, &inversion);
  out.inversion = inversion;
  out.quadrature = std::abs(out.transformed - integrate(6, false, nullptr));

  // Tail: the flux grows like t^k for large t.
  const double fT = std::abs(invert_laplace(F, T, opts).value[0].real());
  double tail = 0.0;
  const double len = 60.0 / p;
  const int nq = 64;
  for (int i = 0; i < nq; ++i) {
    const double t = T + (i + 0.5) * len / nq;
    tail += len / nq * std::exp(-p * t) * fT * std::pow(t / T, exc.k);
  }
  out.tail = 2.0 * tail;
  return out;
}

}  // namespace vorder
