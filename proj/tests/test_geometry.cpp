#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "istab/grid.hpp"
#include "istab/potential.hpp"
#include "istab/spectral.hpp"

using namespace istab;

namespace {

GridSpec unit_cube(double h) {
  GridSpec s;
  s.n = 3;
  s.shape = Shape::Box;
  s.center = Vec3::Zero();
  s.half_widths = Vec3(0.5, 0.5, 0.5);
  s.h = h;
  return s;
}

GridSpec unit_square(double h) {
  GridSpec s = unit_cube(h);
  s.n = 2;
  return s;
}

}  // namespace

TEST_CASE("unit square, h = 1/4: interior vertices and boundary faces") {
  // Independent enumeration: a 4x4 cell tiling has a 3x3 block of interior
  // vertices and 4 boundary edges per side.
  const auto g = build_grid(unit_square(0.25));
  CHECK(g.num_interior() == 9);
  CHECK(g.num_faces() == 16);
  CHECK(g.boundary_measure() == doctest::Approx(4.0).epsilon(1e-12));
  for (const auto& f : g.faces) {
    CHECK(f.ds == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::abs(f.normal.norm() - 1.0) < 1e-12);
    // Outward: the normal points away from the center.
    CHECK(f.normal.dot(f.center) > 0.0);
  }
}

TEST_CASE("unit cube, h = 1/2: one interior vertex, 24 faces") {
  const auto g = build_grid(unit_cube(0.5));
  CHECK(g.num_interior() == 1);
  CHECK(g.num_faces() == 24);
  CHECK(g.boundary_measure() == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(g.vertex_pos(g.interior_coords[0]).norm() < 1e-12);
  CHECK(g.enclosing_radius >= 1.0);
}

TEST_CASE("box counts scale as (m-1)^n interior and 2n m^{n-1} faces") {
  for (int m : {4, 8, 16}) {
    const auto g3 = build_grid(unit_cube(1.0 / m));
    CHECK(g3.num_interior() == (m - 1) * (m - 1) * (m - 1));
    CHECK(g3.num_faces() == 6 * m * m);
    const auto g2 = build_grid(unit_square(1.0 / m));
    CHECK(g2.num_interior() == (m - 1) * (m - 1));
    CHECK(g2.num_faces() == 4 * m);
  }
}

TEST_CASE("invalid grid specs are rejected") {
  auto s = unit_cube(0.3);  // 0.3 does not divide 1
  CHECK_THROWS_AS(build_grid(s), InvalidArgument);
  s = unit_cube(0.25);
  s.h = -0.25;
  CHECK_THROWS_AS(build_grid(s), InvalidArgument);
  s = unit_cube(0.25);
  s.n = 4;
  CHECK_THROWS_AS(build_grid(s), InvalidArgument);
  GridSpec b;
  b.shape = Shape::Ball;
  b.radius = 0.5;
  b.h = 0.2;  // not < radius/4
  CHECK_THROWS_AS(build_grid(b), InvalidArgument);
}

TEST_CASE("face lookup maps centers back to ids") {
  const auto g = build_grid(unit_cube(0.25));
  for (int fi = 0; fi < g.num_faces(); ++fi)
    CHECK(g.find_face(g.faces[fi].center) == fi);
  CHECK(g.find_face(Vec3(10, 0, 0)) == -1);
  CHECK(g.find_face(Vec3(0.1234, 0, 0.5)) == -1);
}

TEST_CASE("ball staircase: unit normals, positive weights, measure near 2*pi*r") {
  GridSpec s;
  s.n = 2;
  s.shape = Shape::Ball;
  s.center = Vec3::Zero();
  s.radius = 0.5;
  s.h = 0.05;
  const auto g = build_grid(s);
  CHECK(g.num_interior() > 0);
  CHECK(g.num_faces() > 0);
  for (const auto& f : g.faces) {
    CHECK(std::abs(f.normal.norm() - 1.0) < 1e-12);
    CHECK(f.ds > 0.0);
    CHECK(f.ds <= s.h + 1e-12);
  }
  // Cosine-projected staircase perimeter approximates the circle.
  const double exact = 2.0 * M_PI * s.radius;
  CHECK(g.boundary_measure() == doctest::Approx(exact).epsilon(0.15));
}

TEST_CASE("3d ball staircase area approaches 4*pi*r^2") {
  GridSpec s;
  s.n = 3;
  s.shape = Shape::Ball;
  s.radius = 0.5;
  s.h = 0.05;
  const auto g = build_grid(s);
  const double exact = 4.0 * M_PI * s.radius * s.radius;
  CHECK(g.boundary_measure() == doctest::Approx(exact).epsilon(0.15));
}

TEST_CASE("partition: cube with alpha = e1, epsilon = 1/2") {
  const auto g = build_grid(unit_cube(0.5));
  const auto p = partition_boundary(g, Vec3::UnitX(), 0.5);
  // The +x face of the cube carries 4 lattice faces; all have alpha.nu = 1.
  CHECK(p.plus.size() == 4);
  CHECK(p.plus_eps.size() == 4);
  CHECK(p.minus.size() == 20);
  CHECK(p.minus_eps.size() == 20);
  CHECK(p.plus.size() + p.minus.size() == static_cast<std::size_t>(g.num_faces()));
  for (int f : p.plus) CHECK(g.faces[f].normal.x() == doctest::Approx(1.0));
  CHECK(p.measure(g, p.plus) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.measure(g, p.minus) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("partition is monotone in epsilon and consistent on a ball") {
  GridSpec s;
  s.n = 2;
  s.shape = Shape::Ball;
  s.radius = 0.5;
  s.h = 0.05;
  const auto g = build_grid(s);
  const Vec3 alpha = Vec3(1.0, 1.0, 0.0).normalized();
  std::size_t prev = 0;
  for (double eps : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto p = partition_boundary(g, alpha, eps);
    CHECK(p.minus_eps.size() >= prev);
    prev = p.minus_eps.size();
    for (int f : p.plus_eps) CHECK(alpha.dot(g.faces[f].normal) > eps);
    for (int f : p.minus_eps) CHECK(alpha.dot(g.faces[f].normal) <= eps);
    std::set<int> all(p.plus_eps.begin(), p.plus_eps.end());
    all.insert(p.minus_eps.begin(), p.minus_eps.end());
    CHECK(all.size() == static_cast<std::size_t>(g.num_faces()));
  }
  CHECK_THROWS_AS(partition_boundary(g, Vec3(2, 0, 0), 0.5), InvalidArgument);
  CHECK_THROWS_AS(partition_boundary(g, Vec3::UnitX(), 0.0), InvalidArgument);
  CHECK_THROWS_AS(partition_boundary(g, Vec3::UnitX(), 1.0), InvalidArgument);
}

TEST_CASE("potential sampling zero-extends outside the domain") {
  const auto g = build_grid(unit_cube(0.25));
  auto q = make_potential(g, constant_potential(3.0), "const3", 3, 10.0);
  for (int i = 0; i < g.num_interior(); ++i) CHECK(q.values[i] == 3.0);
  CHECK(q.eval(Vec3(0.2, 0.0, 0.1)) == 3.0);
  CHECK(q.eval(Vec3(0.7, 0.0, 0.0)) == 0.0);
  CHECK(q.eval(Vec3(0.5, 0.0, 0.0)) == 0.0);  // closed boundary excluded
}

TEST_CASE("discrete Sobolev norm of a constant on the periodic box") {
  // Constant c on the box of side L: ||c||_{H^s} = |c| L^{n/2} for every s
  // because only the zero mode is present.
  PeriodicBox box(3, 2.0, 16);
  PeriodicBox::Field f(box.size(), Complex(2.5, 0.0));
  for (double s : {0.0, 1.0, 3.0, -1.0})
    CHECK(box.sobolev_norm(f, s) ==
          doctest::Approx(2.5 * std::pow(2.0, 1.5)).epsilon(1e-12));
}

TEST_CASE("Sobolev norm of a single Fourier mode matches (1+|k|^2)^{s/2}") {
  PeriodicBox box(3, 2.0, 16);
  PeriodicBox::Field f(box.size());
  const Vec3 k = box.wavenumber(box.flat(2, 1, 0));
  for (std::size_t i = 0; i < box.size(); ++i)
    f[i] = std::exp(Complex(0, 1) * k.dot(box.point(i)));
  const double l2 = std::pow(2.0, 1.5);  // |e^{ikx}| = 1 on volume 8
  for (double s : {-1.0, 0.0, 2.0})
    CHECK(box.sobolev_norm(f, s) ==
          doctest::Approx(std::pow(1.0 + k.squaredNorm(), s / 2.0) * l2)
              .epsilon(1e-10));
}

TEST_CASE("H^{-1} norm is controlled by L^2 and ordering holds") {
  PeriodicBox box(2, 2.0, 32);
  PeriodicBox::Field f(box.size());
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : f) v = Complex(u(rng), u(rng));
  const double hm1 = box.sobolev_norm(f, -1.0);
  const double l2 = box.sobolev_norm(f, 0.0);
  const double h1 = box.sobolev_norm(f, 1.0);
  CHECK(hm1 <= l2);
  CHECK(l2 <= h1);
  CHECK(box.l2_norm(f) == doctest::Approx(l2).epsilon(1e-10));
}

TEST_CASE("admissibility thresholds on the canonical norm") {
  const auto g = build_grid(unit_cube(1.0 / 16));
  auto q = make_potential(g, gaussian_bump(Vec3::Zero(), 0.15, 1.0), "g", 3,
                          500.0);
  const double norm = potential_sobolev_norm(q, 3);
  CHECK(norm > 0.0);
  CHECK(is_admissible(q));
  q.M = norm / 2.0;
  CHECK_FALSE(is_admissible(q));
}
