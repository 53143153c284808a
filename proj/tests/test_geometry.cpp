#include "doctest.h"
#include "vorder/geometry.hpp"

using namespace vorder;

TEST_CASE("inclusion membership is open") {
  const auto ball = make_ball(Vec2(0.2, 0.1), 0.3, 0.2);
  CHECK(ball.contains(Vec2(0.2, 0.1)));
  CHECK_FALSE(ball.contains(Vec2(0.5, 0.1)));

  const auto tri = make_simplex_from_vertices({Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)}, 0.1);
  CHECK(tri.contains(Vec2(0.2, 0.2)));
  CHECK_FALSE(tri.contains(Vec2(0.5, 0.5)));
  CHECK_FALSE(tri.contains(Vec2(0.0, 0.3)));

  const auto box = make_box(Vec2(0, 0), Vec2(1, 2), -0.1);
  CHECK(box.contains(Vec2(0.4, 0.9)));
  CHECK_FALSE(box.contains(Vec2(0.5, 0.0)));
}

TEST_CASE("clockwise simplex vertices are reoriented") {
  const auto tri = make_simplex_from_vertices({Vec2(0, 0), Vec2(0, 1), Vec2(1, 0)}, 0.1);
  CHECK(std::get<Simplex>(tri.shape).matrix.determinant() > 0.0);
  CHECK(tri.volume() == doctest::Approx(0.5));
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(make_ball(Vec2(0, 0), -1.0, 0.1), Error);
  CHECK_THROWS_AS(make_ball(Vec2(0, 0), 0.2, 1.0), Error);
  Mat flipped(2, 2);
  flipped << 0, 1, 1, 0;
  CHECK_THROWS_AS(make_simplex(Vec2(0, 0), flipped, 0.1), Error);
  CHECK_THROWS_AS(make_box(Vec2(0, 0), Vec2(1, 0), 0.1), Error);
}

TEST_CASE("volumes") {
  CHECK(make_ball(Vec::Zero(3), 2.0, 0.1).volume() == doctest::Approx(4.0 / 3.0 * kPi * 8.0));
  CHECK(make_box(Vec::Zero(3), Vec::Constant(3, 0.5), 0.1).volume() == doctest::Approx(0.125));
  CHECK(make_box(Vec2(0, 0), Vec2(2, 1), 0.1).vertices().size() == 4);
}

TEST_CASE("domains") {
  const Domain disk = Domain::unit_disk();
  CHECK(disk.contains(Vec2(0.5, 0.5)));
  CHECK_FALSE(disk.contains(Vec2(0.8, 0.8)));
  CHECK(disk.inner_distance(Vec2(0.5, 0.0)) == doctest::Approx(0.5));
  CHECK(disk.contains_closure(make_ball(Vec2(0.5, 0.0), 0.4, 0.1)));
  CHECK_FALSE(disk.contains_closure(make_ball(Vec2(0.5, 0.0), 0.5, 0.1)));

  // L-shaped polygon given clockwise; the constructor reorients it.
  const Domain ell(PolygonDomain{{Vec2(0, 0), Vec2(0, 2), Vec2(1, 2), Vec2(1, 1), Vec2(2, 1), Vec2(2, 0)}});
  CHECK(ell.contains(Vec2(0.5, 1.5)));
  CHECK_FALSE(ell.contains(Vec2(1.5, 1.5)));
  CHECK(ell.inner_distance(Vec2(0.5, 0.5)) == doctest::Approx(0.5));
  // Triangle with vertices inside but an edge crossing the notch.
  CHECK_FALSE(ell.contains_closure(make_simplex_from_vertices({Vec2(0.5, 1.8), Vec2(0.2, 0.2), Vec2(1.8, 0.5)}, 0.1)));
  CHECK(ell.contains_closure(make_simplex_from_vertices({Vec2(0.2, 0.2), Vec2(0.8, 0.2), Vec2(0.2, 1.8)}, 0.1)));
}

TEST_CASE("order field evaluation adds overlapping amplitudes") {
  OrderField f;
  f.background = 0.4;
  f.inclusions = {make_ball(Vec2(0, 0), 0.5, 0.1), make_ball(Vec2(0.2, 0), 0.5, 0.05)};
  CHECK(f(Vec2(0.1, 0.0)) == doctest::Approx(0.55));
  CHECK(f(Vec2(-0.4, 0.0)) == doctest::Approx(0.5));
  CHECK(f(Vec2(0.0, 0.9)) == doctest::Approx(0.4));
}

TEST_CASE("grid background interpolates bilinearly") {
  GridBackground g{Vec2(-1, -1), Vec2(1, 1), Mat(2, 2)};
  g.values << 0.3, 0.5, 0.4, 0.6;  // rows along x
  CHECK(g(Vec2(0, 0)) == doctest::Approx(0.45));
  CHECK(g(Vec2(1, -1)) == doctest::Approx(0.4));
  CHECK(g(Vec2(5, 5)) == doctest::Approx(0.6));
}

TEST_CASE("orthonormal completion") {
  const Mat b = orthonormal_basis_with_first(Eigen::Vector3d(1, 2, 2));
  CHECK((b * b.transpose() - Mat::Identity(3, 3)).norm() < 1e-14);
  CHECK((b.row(0).transpose() - Eigen::Vector3d(1, 2, 2) / 3.0).norm() < 1e-15);
  const Mat e = orthonormal_basis_with_first(Vec2(1, 0));
  CHECK(e.isIdentity(0.0));
}
