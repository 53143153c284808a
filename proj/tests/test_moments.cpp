#include <cmath>
#include <random>

#include "doctest.h"
#include "vorder/moments.hpp"
#include "vorder/oracle.hpp"
#include "vorder/specfun.hpp"

using namespace vorder;

namespace {

double rel(Complex a, Complex b) { return std::abs(a - b) / std::abs(b); }

CVec cvec(std::initializer_list<Complex> v) {
  CVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (Complex c : v) out[i++] = c;
  return out;
}

OrderField two_balls(Vec2 a, double ra, double ca, Vec2 b, double rb, double cb) {
  OrderField f;
  f.inclusions = {make_ball(a, ra, ca), make_ball(b, rb, cb)};
  return f;
}

}  // namespace

TEST_CASE("direction vectors") {
  const Mat I2 = Mat::Identity(2, 2);
  CHECK((direction_vector(make_direction(I2, 0.0)) - cvec({1.0, 0.0})).norm() == 0.0);
  const CVec w = direction_vector(make_direction(I2, Complex(0.0, -1.0)));
  CHECK(std::abs(w[0] - std::cosh(1.0)) < 1e-15);
  CHECK(std::abs(w[1] - Complex(0.0, -std::sinh(1.0))) < 1e-15);

  const Mat I3 = Mat::Identity(3, 3);
  Vec phi(1);
  phi << 0.5 * kPi;
  CHECK((direction_vector(make_direction(I3, 0.5 * kPi, phi)) - cvec({0.0, 0.0, 1.0})).norm() < 1e-15);
}

TEST_CASE("direction vectors stay on the (complexified) unit sphere") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int d = 2; d <= 4; ++d) {
    const Mat basis = orthonormal_basis_with_first(Vec::Random(d));
    for (int trial = 0; trial < 20; ++trial) {
      Vec phis(d - 2);
      for (int j = 0; j < d - 2; ++j) phis[j] = u(rng);
      const double theta = u(rng);
      const CVec w = direction_vector(make_direction(basis, theta, phis));
      CHECK(std::abs(w.squaredNorm() - 1.0) < 1e-12);
      CHECK(std::abs(bdot(w, w) - 1.0) < 1e-12);
      const CVec wc = direction_vector(make_direction(basis, Complex(theta, u(rng)), phis));
      CHECK(std::abs(bdot(wc, wc) - 1.0) < 1e-10 * std::max(1.0, wc.squaredNorm()));
      // |ω + ê₁| = 2|cos(θ/2)| for real angles
      const Vec shifted = w.real() + basis.row(0).transpose();
      CHECK(std::abs(shifted.norm() - 2.0 * std::abs(std::cos(0.5 * theta))) <= 1e-12);
    }
  }
}

TEST_CASE("direction_from_vector inverts direction_vector") {
  for (int d = 2; d <= 4; ++d) {
    const Mat basis = orthonormal_basis_with_first(Vec::Random(d));
    const Vec target = Vec::Random(d).normalized();
    CHECK((direction_vector(direction_from_vector(basis, target)).real() - target).norm() < 1e-13);
  }
}

TEST_CASE("half-line imaginary part is the quarter turn") {
  const Mat basis = orthonormal_basis_with_first(Eigen::Vector3d(0.3, -1.0, 0.5));
  Vec phi(1);
  phi << 1.1;
  const auto dir = make_direction(basis, 0.4, phi);
  const double R = 2.5;
  const CVec w = direction_vector(dir.on_half_line(R));
  CHECK((w.imag() + std::sinh(R) * quarter_turn(dir)).norm() < 1e-12);
  CHECK((w.real() - std::cosh(R) * direction_vector(dir).real()).norm() < 1e-12);
}

TEST_CASE("ball moment: small frequency and closed forms") {
  CHECK(rel(ball_moment(1.0, cvec({0.0, 0.0})), kPi) < 1e-15);
  CHECK(rel(ball_moment(1.0, cvec({1e-9, 0.0})), kPi) < 1e-15);
  CHECK(rel(ball_moment(2.0, cvec({0.0, 0.0, 0.0})), 4.0 / 3.0 * kPi * 8.0) < 1e-15);

  // Two-dimensional specialisation -2πi r |y|^{-1} J_1(i r |y|).
  for (double t : {0.5, 3.0, 20.0}) {
    const double r = 0.7;
    const Complex special = Complex(0.0, -2.0 * kPi) * r / t * bessel_j(1.0, Complex(0.0, r * t));
    CHECK(rel(ball_moment(r, cvec({0.6 * t, 0.8 * t})), special) < 1e-12);
  }
}

TEST_CASE("ball moment against quadrature") {
  const auto disk = make_ball(Vec2(0, 0), 1.0, 0.1);
  const auto q = quadrature_moment(disk, cvec({0.3, 0.4}));
  CHECK(rel(ball_moment(1.0, cvec({0.3, 0.4})), q.value) < 1e-8);

  const auto ball3 = make_ball(Vec::Zero(3), 0.6, 0.1);
  const CVec y = cvec({Complex(1.0, 2.0), Complex(-0.5, 0.3), Complex(2.0, -1.0)});
  CHECK(rel(ball_moment(0.6, y), quadrature_moment(ball3, y).value) < 1e-8);

  // Probe form, θ = 0.3 - 1.5i, ω₀ = ê₁.
  const auto dir = make_direction(Mat::Identity(2, 2), Complex(0.3, -1.5));
  const CVec yp = direction_vector(dir) + cvec({1.0, 0.0});
  CHECK(rel(ball_moment(1.0, dir), quadrature_moment(disk, yp).value) < 1e-6);
  CHECK(rel(ball_moment(1.0, dir), ball_moment(1.0, yp)) < 1e-10);
}

TEST_CASE("ball probe outside the strip is a branch error") {
  const auto dir = make_direction(Mat::Identity(2, 2), Complex(1.7, -1.0));
  try {
    ball_moment(0.5, dir);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Branch);
  }
}

TEST_CASE("ball moment across the series crossover") {
  // Just past the crossover the expansion is used; its relative error is O(1/|z|).
  const auto dir = make_direction(Mat::Identity(3, 3), 0.3, Vec::Constant(1, 0.7));
  const double r = 0.4;
  double R = 5.0;
  auto f_of = [&](double R) { return 2.0 * std::cos(0.5 * dir.on_half_line(R).theta); };
  while (std::abs(r * f_of(R)) <= kBesselSeriesLimit) R += 0.01;
  const Complex f = f_of(R);
  const Complex series = std::pow(2.0 * kPi * r, 1.5) * principal_power(f, -1.5) *
                         std::exp(Complex(0.0, -0.75 * kPi)) * bessel_j_series(1.5, Complex(0.0, r) * f);
  CHECK(rel(ball_moment(r, dir.on_half_line(R)), series) < 5.0 / kBesselSeriesLimit);
}

TEST_CASE("simplex moment: formula and confluent cases") {
  const Mat I = Mat::Identity(2, 2);
  CHECK(rel(simplex_moment(Vec2(0, 0), I, cvec({0.0, 0.0})), 0.5) < 1e-15);
  const double e = std::exp(1.0);
  CHECK(rel(simplex_moment(Vec2(0, 0), I, cvec({1.0, 2.0})), -e + 0.5 * e * e + 0.5) < 1e-13);
  // translation
  CHECK(rel(simplex_moment(Vec2(1, 0), I, cvec({1.0, 2.0})), e * simplex_moment(Vec2(0, 0), I, cvec({1.0, 2.0}))) <
        1e-14);
  // Y1 = 0: (e^{Y2} - 1 - Y2)/Y2².
  const auto tri = make_simplex(Vec2(0, 0), I, 0.1);
  const CVec y0 = cvec({0.0, 1.3});
  CHECK(rel(simplex_moment(Vec2(0, 0), I, y0), (std::exp(1.3) - 2.3) / (1.3 * 1.3)) < 1e-13);
  CHECK(rel(simplex_moment(Vec2(0, 0), I, y0), quadrature_moment(tri, y0).value) < 1e-12);
  // Y1 = Y2 = Y: (e^Y (Y - 1) + 1)/Y².
  for (double Y : {0.7, -2.0, 5.0}) {
    const Complex expected = (std::exp(Y) * (Y - 1.0) + 1.0) / (Y * Y);
    CHECK(rel(simplex_moment(Vec2(0, 0), I, cvec({Y, Y})), expected) < 1e-13);
  }
}

TEST_CASE("simplex moment is continuous through confluence") {
  Mat V(3, 3);
  V << 1.0, 0.2, -0.1, 0.1, 0.9, 0.3, -0.2, 0.1, 1.1;
  const Vec base = Eigen::Vector3d(0.1, -0.2, 0.3);
  // Choose y with V^T y = (Y1, Y1 + t, -0.8).
  const double Y1 = 1.4;
  const Complex limit = [&] {
    const Vec target = Eigen::Vector3d(Y1, Y1, -0.8);
    return simplex_moment(base, V, V.transpose().partialPivLu().solve(target).cast<Complex>());
  }();
  const auto tet = make_simplex(base, V, 0.1);
  const Vec target = Eigen::Vector3d(Y1, Y1, -0.8);
  const CVec y_conf = V.transpose().partialPivLu().solve(target).cast<Complex>();
  CHECK(rel(limit, quadrature_moment(tet, y_conf).value) < 1e-11);
  for (int k = 1; k <= 8; ++k) {
    const Vec t = Eigen::Vector3d(Y1, Y1 + std::pow(10.0, -k), -0.8);
    const Complex v = simplex_moment(base, V, V.transpose().partialPivLu().solve(t).cast<Complex>());
    CHECK(rel(v, limit) < 3.0 * std::pow(10.0, -k));  // O(t) approach
  }
}

TEST_CASE("exp divided differences") {
  CHECK(std::abs(exp_divided_difference(cvec({0.3})) - std::exp(0.3)) < 1e-16);
  CHECK(rel(exp_divided_difference(cvec({1.0, 3.0})), (std::exp(3.0) - std::exp(1.0)) / 2.0) < 1e-15);
  // All nodes equal: e^z / n!.
  CHECK(rel(exp_divided_difference(cvec({2.0, 2.0, 2.0, 2.0})), std::exp(2.0) / 6.0) < 1e-14);
  // Far-apart complex nodes against the explicit formula Σ e^{z_i}/Π(z_i - z_j).
  const CVec z = cvec({Complex(0, 0), Complex(3, 1), Complex(-2, 4), Complex(5, -3)});
  Complex direct = 0.0;
  for (int i = 0; i < 4; ++i) {
    Complex den = 1.0;
    for (int j = 0; j < 4; ++j)
      if (j != i) den *= z[i] - z[j];
    direct += std::exp(z[i]) / den;
  }
  CHECK(rel(exp_divided_difference(z), direct) < 1e-13);
}

TEST_CASE("simplex permutation symmetry") {
  Mat V(3, 3);
  V << 1.0, 0.2, -0.1, 0.1, 0.9, 0.3, -0.2, 0.1, 1.1;
  Mat P(3, 3);  // cyclic column shift keeps the determinant
  P.col(0) = V.col(1);
  P.col(1) = V.col(2);
  P.col(2) = V.col(0);
  const CVec y = cvec({Complex(0.7, -0.3), Complex(-1.2, 0.4), Complex(2.0, 1.0)});
  const Vec base = Eigen::Vector3d(0.2, 0.0, -0.1);
  CHECK(rel(simplex_moment(base, P, y), simplex_moment(base, V, y)) < 1e-12);
  CHECK_THROWS_AS(simplex_moment(base, -V, y), Error);
}

TEST_CASE("box moment") {
  CHECK(rel(box_moment(Vec2(0.3, -1), Vec2(2, 0.5), cvec({0.0, 0.0})), 1.0) < 1e-15);
  CHECK(rel(box_moment(Vec2(0, 0), Vec2(1, 1), cvec({1.0, 0.0})), 2.0 * std::sinh(0.5)) < 1e-15);
  // Unit square = two triangles.
  const CVec y = cvec({Complex(0.8, 0.2), Complex(-1.5, 0.7)});
  const Complex tri1 = shape_moment(make_simplex_from_vertices({Vec2(0, 0), Vec2(1, 0), Vec2(1, 1)}, 0.1), y);
  const Complex tri2 = shape_moment(make_simplex_from_vertices({Vec2(0, 0), Vec2(1, 1), Vec2(0, 1)}, 0.1), y);
  CHECK(std::abs(box_moment(Vec2(0.5, 0.5), Vec2(1, 1), y) - (tri1 + tri2)) < 1e-12);
}

TEST_CASE("translation covariance") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 2; d <= 3; ++d) {
    for (int trial = 0; trial < 10; ++trial) {
      CVec y(d);
      for (int i = 0; i < d; ++i) y[i] = Complex(2.5 * u(rng), 2.5 * u(rng));
      Vec c(d);
      for (int i = 0; i < d; ++i) c[i] = u(rng);
      const Complex shift = std::exp(bdot(c, y));
      Mat V = Mat::Identity(d, d) + 0.3 * Mat::Random(d, d);
      if (V.determinant() < 0) V.col(0).swap(V.col(1));
      const Vec w = Vec::Constant(d, 0.4) + 0.2 * Vec::Random(d).cwiseAbs();
      for (const Inclusion& inc : {make_ball(Vec::Zero(d), 0.5, 0.1), make_simplex(Vec::Zero(d), V, 0.1),
                                   make_box(Vec::Zero(d), w, 0.1)}) {
        Inclusion moved = inc;
        std::visit([&](auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Simplex>) s.base += c;
          else s.center += c;
        }, moved.shape);
        CHECK(rel(shape_moment(moved, y), shift * shape_moment(inc, y)) < 1e-12);
      }
    }
  }
}

TEST_CASE("difference moment") {
  const auto cfg = two_balls(Vec2(0.2, 0.1), 0.3, 0.2, Vec2(-0.4, 0.0), 0.2, -0.1);
  const Mat basis = Mat::Identity(2, 2);
  for (double th : {0.0, 0.7, -2.0}) {
    const auto dir = make_direction(basis, Complex(th, -1.0));
    CHECK(difference_moment(cfg, cfg, dir, Vec2(1, 0)) == Complex(0.0, 0.0));
  }

  OrderField single;
  single.inclusions = {make_ball(Vec2(0.2, 0.1), 0.3, 0.25)};
  OrderField empty;
  const auto dir = make_direction(basis, 0.9);
  const CVec y = direction_vector(dir) + cvec({1.0, 0.0});
  const Complex expected = 0.25 * std::exp(bdot(Vec2(0.2, 0.1), y)) * ball_moment(0.3, y);
  CHECK(rel(difference_moment(single, empty, dir, Vec2(1, 0)), expected) < 1e-14);

  OrderField other = empty;
  other.background = 0.3;
  CHECK_THROWS_AS(difference_moment(single, other, dir, Vec2(1, 0)), Error);

  const auto cfg2 = two_balls(Vec2(0.2, 0.1), 0.3, 0.2, Vec2(-0.4, 0.05), 0.2, -0.1);
  double max_w = 0.0;
  for (int k = 0; k < 64; ++k) {
    const auto dk = make_direction(basis, 2.0 * kPi * k / 64.0);
    max_w = std::max(max_w, std::abs(difference_moment(cfg, cfg2, dk, Vec2(1, 0))));
  }
  CHECK(max_w > 1e-4);
}

TEST_CASE("difference moment is holomorphic and conjugate symmetric in theta") {
  OrderField a, b;
  a.inclusions = {make_ball(Vec2(0.2, 0.1), 0.3, 0.2),
                  make_simplex_from_vertices({Vec2(-0.5, -0.5), Vec2(0.0, -0.4), Vec2(-0.3, 0.0)}, 0.1)};
  b.inclusions = {make_box(Vec2(0.1, -0.2), Vec2(0.3, 0.2), 0.15)};
  const auto W = difference_sampler(a, b);
  const Mat basis = orthonormal_basis_with_first(Vec2(0.6, 0.8));
  const Complex theta(0.4, -0.8);
  auto residual = [&](double eps) {
    auto at = [&](Complex t) { return W(make_direction(basis, t)); };
    const Complex dx = (at(theta + eps) - at(theta - eps)) / (2.0 * eps);
    const Complex dy = (at(theta + Complex(0, eps)) - at(theta - Complex(0, eps))) / Complex(0, 2.0 * eps);
    return std::abs(dx - dy);
  };
  const double ratio = residual(1e-3) / residual(5e-4);
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.0);
  const Complex w1 = W(make_direction(basis, theta));
  const Complex w2 = W(make_direction(basis, std::conj(theta)));
  CHECK(std::abs(w2 - std::conj(w1)) < 1e-13 * std::abs(w1));
}

TEST_CASE("generic directions") {
  const std::vector<Vec> centers = {Vec2(0.2, 0.1), Vec2(-0.3, 0.4), Vec2(0.2, -0.5)};
  const auto cons = distinct_projection_constraints(centers);
  CHECK(cons.size() == 3);
  const Vec w = generic_direction(cons, 2, 42);
  CHECK(std::abs(w.norm() - 1.0) < 1e-14);
  for (const auto& c : cons) CHECK(std::abs(w.dot(c.a)) >= 1e-3 * c.a.norm() - 1e-15);
  CHECK(std::abs(generic_direction({}, 3, 1).norm() - 1.0) < 1e-14);
  CHECK(generic_direction(cons, 2, 42) == w);

  // b_i larger than |a_i| can never be met with equality, but a constraint demanding a
  // margin larger than the sphere allows cannot be satisfied.
  GenericOptions strict;
  strict.margin_factor = 5.0;
  try {
    generic_direction(cons, 2, 1, strict);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Genericity);
  }
}

TEST_CASE("simplex generic set") {
  Mat V(3, 3);
  V << 1.0, 0.2, -0.1, 0.1, 0.9, 0.3, -0.2, 0.1, 1.1;
  const Mat basis = orthonormal_basis_with_first(Eigen::Vector3d(1, 0, 0));
  const auto dir = simplex_generic_direction({V}, basis, 5);
  const auto values = simplex_genericity_values({V}, dir);
  CHECK(values.size() == 12);
  for (double v : values) CHECK(std::abs(v) >= 1e-3 * V.norm());
}

TEST_CASE("separating directions") {
  const std::vector<Vec> tri = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  const auto s = separating_direction(tri, Vec2(1, 0));
  CHECK(s.gap > 0.0);
  for (const Vec& x : tri)
    if (x != Vec2(1, 0)) CHECK(Vec2(1, 0).dot(s.omega) - x.dot(s.omega) >= s.gap - 1e-14);

  const std::vector<Vec> square = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  const auto q = separating_direction(square, Vec2(1, 1));
  CHECK((q.omega - Vec2(1, 1).normalized()).norm() < 1e-12);

  std::vector<Vec> with_centre = square;
  with_centre.push_back(Vec2(0.5, 0.5));
  CHECK_THROWS_AS(separating_direction(with_centre, Vec2(0.5, 0.5)), Error);
  CHECK_THROWS_AS(separating_direction(square, Vec2(0.5, 0.0)), Error);
}
