#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "slfem/coefficient.hpp"

using namespace slfem;

namespace {

StrainTensor random_strain(double max_norm) {
  StrainTensor s;
  do {
    s.e11 = oracles::uniform(-1, 1);
    s.e22 = oracles::uniform(-1, 1);
    s.e12 = oracles::uniform(-1, 1);
  } while (s.norm() == 0.0);
  double target = oracles::uniform(0, max_norm);
  double f = target / s.norm();
  return {f * s.e11, f * s.e22, f * s.e12};
}

double dot(const StrainTensor& a, const StrainTensor& b) {
  return a.e11 * b.e11 + a.e22 * b.e22 + 2 * a.e12 * b.e12;
}

StrainTensor sub(const StrainTensor& a, const StrainTensor& b) {
  return {a.e11 - b.e11, a.e22 - b.e22, a.e12 - b.e12};
}

} // namespace

TEST_CASE("eval_kappa basics and clamping") {
  CHECK(eval_kappa(1.0, 0.5, 1e-6) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(eval_kappa(7.3, 0.0, 1e-6) == doctest::Approx(1.0).epsilon(1e-15));

  ClampCounter c;
  CHECK(eval_kappa(1.0, 1.2, 1e-6, &c) == doctest::Approx(1e6).epsilon(1e-12));
  CHECK(c.total() == 1);
  eval_kappa(1.0, 0.1, 1e-6, &c);
  CHECK(c.total() == 1);  // no clamp when admissible
}

TEST_CASE("constitutive stress basics") {
  StrainTensor zero;
  auto s0 = constitutive_stress(zero, 1.0);
  CHECK(s0.norm() == 0.0);

  StrainTensor xi{0.3, -0.4, 0.0};  // |xi| = 0.5
  REQUIRE(xi.norm() == doctest::Approx(0.5));
  auto s = constitutive_stress(xi, 1.0);
  CHECK(s.e11 == doctest::Approx(2 * xi.e11).epsilon(1e-14));
  CHECK(s.e22 == doctest::Approx(2 * xi.e22).epsilon(1e-14));

  StrainTensor big{1.0, 1.0, 0.0};
  CHECK_THROWS_AS(constitutive_stress(big, 1.0), std::domain_error);
}

TEST_CASE("monotonicity over 1e4 sampled pairs") {
  for (int it = 0; it < 10000; ++it) {
    double beta = oracles::uniform(0.25, 4.0);
    StrainTensor x1 = random_strain(0.999 / beta);
    StrainTensor x2 = random_strain(0.999 / beta);
    auto d = sub(constitutive_stress(x1, beta), constitutive_stress(x2, beta));
    auto dx = sub(x1, x2);
    CHECK(dot(d, dx) >= dot(dx, dx) - 1e-12);
  }
}

TEST_CASE("continuity bound over sampled pairs") {
  int tested = 0;
  while (tested < 10000) {
    double beta = oracles::uniform(0.25, 4.0);
    StrainTensor x1 = random_strain(0.45 / beta);
    StrainTensor x2 = random_strain(0.45 / beta);
    double s = beta * (x1.norm() + x2.norm());
    if (s >= 1.0) continue;
    ++tested;
    auto d = sub(constitutive_stress(x1, beta), constitutive_stress(x2, beta));
    auto dx = sub(x1, x2);
    CHECK(d.norm() <= dx.norm() / ((1 - s) * (1 - s)) + 1e-12);
  }
}

TEST_CASE("constitutive roundtrip on the admissible set") {
  for (int it = 0; it < 1000; ++it) {
    double beta = oracles::uniform(0.25, 4.0);
    StrainTensor xi = random_strain(0.99 / beta);
    auto back = inverse_strain(constitutive_stress(xi, beta), beta);
    CHECK(sub(back, xi).norm() < 1e-12 * std::max(1.0, xi.norm()));
  }
}

TEST_CASE("inverse strain stays below the limit") {
  StrainTensor zero;
  CHECK(inverse_strain(zero, 2.0).norm() == 0.0);

  StrainTensor huge{1e6, 0, 0};
  auto e = inverse_strain(huge, 1.0);
  CHECK(e.norm() < 1.0);
  CHECK(e.norm() > 0.999);

  for (int it = 0; it < 1000; ++it) {
    double beta = oracles::uniform(0.25, 4.0);
    StrainTensor T = random_strain(1e4);
    CHECK(beta * inverse_strain(T, beta).norm() < 1.0);
  }
}

TEST_CASE("element strain of exact fields") {
  FineMesh m = build_fine_mesh(6, 6);
  DisplacementField ux(2 * m.n_nodes()), rot(2 * m.n_nodes());
  for (int v = 0; v < m.n_nodes(); ++v) {
    ux[2 * v] = m.nodes[v][0];
    ux[2 * v + 1] = 0.0;
    rot[2 * v] = -m.nodes[v][1];
    rot[2 * v + 1] = m.nodes[v][0];
  }
  for (int t = 0; t < m.n_triangles(); ++t) {
    auto E = element_strain(m, ux, t);
    CHECK(E.e11 == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(E.e22 == doctest::Approx(0.0).epsilon(1e-13));
    CHECK(E.e12 == doctest::Approx(0.0).epsilon(1e-13));
    CHECK(E.norm() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(element_strain(m, rot, t).norm() < 1e-13);
  }
}

TEST_CASE("element strain matches finite differences of the interpolant") {
  FineMesh m = build_fine_mesh(9, 9);
  DisplacementField u(2 * m.n_nodes());
  for (auto& v : u) v = oracles::uniform(-1, 1);

  const double fd = 0.02 * m.h;  // stays inside one triangle from the centroid
  for (int t = 0; t < m.n_triangles(); t += 7) {
    auto c = m.centroid(t);
    auto dx1 = oracles::eval_p1(m, u, c[0] + fd, c[1]);
    auto dx0 = oracles::eval_p1(m, u, c[0] - fd, c[1]);
    auto dy1 = oracles::eval_p1(m, u, c[0], c[1] + fd);
    auto dy0 = oracles::eval_p1(m, u, c[0], c[1] - fd);
    double ux_x = (dx1[0] - dx0[0]) / (2 * fd);
    double ux_y = (dy1[0] - dy0[0]) / (2 * fd);
    double uy_x = (dx1[1] - dx0[1]) / (2 * fd);
    double uy_y = (dy1[1] - dy0[1]) / (2 * fd);

    auto E = element_strain(m, u, t);
    CHECK(E.e11 == doctest::Approx(ux_x).epsilon(1e-8));
    CHECK(E.e22 == doctest::Approx(uy_y).epsilon(1e-8));
    CHECK(E.e12 == doctest::Approx(0.5 * (ux_y + uy_x)).epsilon(1e-8));
  }
}

TEST_CASE("beta field construction") {
  FineMesh m = build_fine_mesh(10, 10);

  auto c1 = build_beta_field(m, CoefficientSpec::constant(1.0));
  CHECK(c1.m == 1.0);
  CHECK(c1.M == 1.0);
  for (double v : c1.values) CHECK(v == 1.0);

  auto ch = build_beta_field(m, CoefficientSpec::channels(1.0, 1e-4, {{0.0, 0.45, 1.0, 0.55}}));
  CHECK(ch.m == doctest::Approx(1e-4));
  CHECK(ch.M == 1.0);
  for (int t = 0; t < m.n_triangles(); ++t) {
    auto c = m.centroid(t);
    bool inside = c[1] >= 0.45 && c[1] <= 0.55;
    CHECK(ch.values[t] == (inside ? 1e-4 : 1.0));
  }

  auto hi = build_beta_field(m, CoefficientSpec::channels(1.0, 1e4, {{0.0, 0.45, 1.0, 0.55}}));
  CHECK(hi.M == doctest::Approx(1e4));
  CHECK(hi.m == 1.0);
}

TEST_CASE("raster beta field") {
  FineMesh m = build_fine_mesh(3, 2);
  const char* path = "raster_test.txt";
  {
    std::ofstream out(path);
    out << "2 3\n";
    out << "1 2 3\n";   // bottom row of cells
    out << "4 5 6\n";
  }
  auto bf = build_beta_field(m, CoefficientSpec::raster(path));
  // cell (i,j) -> raster value row j (from bottom), col i
  CHECK(bf.values[0] == 1.0);   // cell (0,0), lower triangle
  CHECK(bf.values[1] == 1.0);   // upper triangle shares the value
  CHECK(bf.values[2 * 2] == 3.0);
  CHECK(bf.values[2 * 3] == 4.0);  // first cell of the top row
  CHECK(bf.m == 1.0);
  CHECK(bf.M == 6.0);

  {
    std::ofstream out(path);
    out << "3 3\n1 1 1\n1 1 1\n1 1 1\n";
  }
  CHECK_THROWS(build_beta_field(m, CoefficientSpec::raster(path)));
  {
    std::ofstream out(path);
    out << "2 3\n1 2 3\n4 -5 6\n";
  }
  CHECK_THROWS(build_beta_field(m, CoefficientSpec::raster(path)));
  std::remove(path);
}
