#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "slfem/grid.hpp"

using namespace slfem;

namespace {

double tri_area_from_coords(const FineMesh& m, int t) {
  const auto& tri = m.triangles[t];
  const auto& a = m.nodes[tri[0]];
  const auto& b = m.nodes[tri[1]];
  const auto& c = m.nodes[tri[2]];
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

} // namespace

TEST_CASE("fine mesh counts on 2x2") {
  FineMesh m = build_fine_mesh(2, 2);
  CHECK(m.n_nodes() == 9);
  CHECK(m.n_triangles() == 8);
  int nbnd = 0;
  for (auto d : m.dirichlet) nbnd += d;
  CHECK(nbnd == 8);
  CHECK(m.n_free_dofs == 2);
}

TEST_CASE("fine mesh rejects degenerate sizes") {
  CHECK_THROWS_AS(build_fine_mesh(1, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_fine_mesh(2, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_fine_mesh(0, 4), std::invalid_argument);
}

TEST_CASE("fine mesh 200x200 geometry") {
  FineMesh m = build_fine_mesh(200, 200);
  CHECK(m.n_nodes() == 40401);
  CHECK(m.n_triangles() == 80000);

  // summation oracle: signed areas from coordinates
  double total = 0;
  for (int t = 0; t < m.n_triangles(); ++t) {
    double a = tri_area_from_coords(m, t);
    CHECK(a > 0);  // counterclockwise
    total += a;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("every triangle has area h^2/2") {
  FineMesh m = build_fine_mesh(8, 8);
  for (int t = 0; t < m.n_triangles(); ++t)
    CHECK(tri_area_from_coords(m, t) == doctest::Approx(m.h * m.h / 2).epsilon(1e-14));
  CHECK(m.tri_area() == doctest::Approx(m.h * m.h / 2).epsilon(1e-15));
}

TEST_CASE("dirichlet flags match boundary coordinates") {
  FineMesh m = build_fine_mesh(5, 7);
  for (int v = 0; v < m.n_nodes(); ++v) {
    bool bnd = m.nodes[v][0] < 1e-14 || m.nodes[v][0] > 1 - 1e-14 || m.nodes[v][1] < 1e-14 ||
               m.nodes[v][1] > 1 - 1e-14;
    CHECK(static_cast<bool>(m.dirichlet[v]) == bnd);
  }
}

TEST_CASE("coarse grid on 20x20") {
  FineMesh m = build_fine_mesh(20, 20);
  CoarseGrid g = build_coarse_grid(m, 4, 4);
  CHECK(g.interior_coarse_nodes.size() == 9);
  CHECK(g.H == doctest::Approx(0.25));
  CHECK_THROWS_AS(build_coarse_grid(m, 3, 4), std::invalid_argument);

  // nesting: coarse nodes coincide with fine nodes exactly
  for (int cn = 0; cn < g.n_coarse_nodes(); ++cn) {
    int I = cn % (g.Nx + 1), J = cn / (g.Nx + 1);
    const auto& p = m.nodes[g.coarse_node_to_fine_node[cn]];
    CHECK(p[0] == static_cast<double>(I * g.cells_x) / m.nx);
    CHECK(p[1] == static_cast<double>(J * g.cells_y) / m.ny);
    CHECK(std::abs(p[0] - I * g.H) < 1e-15);
    CHECK(std::abs(p[1] - J * g.H) < 1e-15);
  }
}

TEST_CASE("paper-scale coarse grid shape") {
  FineMesh m = build_fine_mesh(200, 200);
  CoarseGrid g = build_coarse_grid(m, 20, 20);
  CHECK(g.H == doctest::Approx(1.0 / 20));
  for (const auto& tris : g.coarse_cell_to_fine_triangles) CHECK(tris.size() == 200);
  CHECK(g.interior_coarse_nodes.size() == 19 * 19);
}

TEST_CASE("neighborhood of the center node") {
  FineMesh m = build_fine_mesh(20, 20);
  CoarseGrid g = build_coarse_grid(m, 4, 4);
  int center = g.coarse_node_index(2, 2);
  Neighborhood nb = neighborhood(g, m, center);
  CHECK(nb.coarse_cells.size() == 4);
  CHECK(nb.fine_nodes.size() == 11 * 11);
  CHECK(std::is_sorted(nb.fine_nodes.begin(), nb.fine_nodes.end()));

  // free dofs never touch global Dirichlet dofs
  for (int ld : nb.free_dofs) {
    int v = nb.fine_nodes[ld / 2];
    CHECK(!m.dirichlet[v]);
    CHECK(nb.local_to_global[ld] >= 0);
  }
  // interior patch away from the domain boundary: all local dofs free
  CHECK(nb.free_dofs.size() == 2 * nb.fine_nodes.size());
  CHECK(nb.interior_dofs.size() == 2 * 9 * 9);  // 9x9 nodes strictly inside the patch
}

TEST_CASE("neighborhood rejects boundary coarse nodes") {
  FineMesh m = build_fine_mesh(20, 20);
  CoarseGrid g = build_coarse_grid(m, 4, 4);
  CHECK_THROWS_AS(neighborhood(g, m, g.coarse_node_index(0, 2)), std::invalid_argument);
  CHECK_THROWS_AS(neighborhood(g, m, g.coarse_node_index(2, 4)), std::invalid_argument);
}

TEST_CASE("neighborhood coverage of fine triangles") {
  FineMesh m = build_fine_mesh(20, 20);
  CoarseGrid g = build_coarse_grid(m, 4, 4);
  std::vector<int> cover(m.n_triangles(), 0);
  for (int cn : g.interior_coarse_nodes) {
    Neighborhood nb = neighborhood(g, m, cn);
    for (int t : nb.triangles) cover[t]++;
  }
  for (int t = 0; t < m.n_triangles(); ++t) {
    CHECK(cover[t] >= 1);
    CHECK(cover[t] <= 4);
  }
}

TEST_CASE("grid construction is deterministic") {
  FineMesh a = build_fine_mesh(12, 8), b = build_fine_mesh(12, 8);
  CHECK(a.triangles == b.triangles);
  CHECK(a.nodes == b.nodes);
  CoarseGrid ga = build_coarse_grid(a, 4, 4), gb = build_coarse_grid(b, 4, 4);
  CHECK(ga.coarse_node_to_fine_node == gb.coarse_node_to_fine_node);
  Neighborhood na = neighborhood(ga, a, ga.coarse_node_index(1, 1));
  Neighborhood nbd = neighborhood(gb, b, gb.coarse_node_index(1, 1));
  CHECK(na.fine_nodes == nbd.fine_nodes);
  CHECK(na.free_dofs == nbd.free_dofs);
}
