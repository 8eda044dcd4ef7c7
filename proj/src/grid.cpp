#include "slfem/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace slfem {

std::array<double, 2> FineMesh::centroid(int t) const {
  const auto& tri = triangles[t];
  double cx = (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0;
  double cy = (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0;
  return {cx, cy};
}

FineMesh build_fine_mesh(int nx, int ny) {
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("build_fine_mesh: nx and ny must be >= 2, got " +
                                std::to_string(nx) + "x" + std::to_string(ny));

  FineMesh m;
  m.nx = nx;
  m.ny = ny;
  m.hx = 1.0 / nx;
  m.hy = 1.0 / ny;
  m.h = m.hx;

  m.nodes.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  m.dirichlet.reserve(m.nodes.capacity());
  const double tol = 1e-14;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      double x = static_cast<double>(i) / nx;
      double y = static_cast<double>(j) / ny;
      m.nodes.push_back({x, y});
      bool bnd = x < tol || x > 1.0 - tol || y < tol || y > 1.0 - tol;
      m.dirichlet.push_back(bnd ? 1 : 0);
    }
  }

  // Cell (i,j) with corners LL, LR, UR, UL. Diagonal LL-UR.
  m.triangles.reserve(static_cast<std::size_t>(2) * nx * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int ll = m.node_index(i, j);
      int lr = m.node_index(i + 1, j);
      int ur = m.node_index(i + 1, j + 1);
      int ul = m.node_index(i, j + 1);
      m.triangles.push_back({ll, lr, ur});  // class 0
      m.triangles.push_back({ll, ur, ul});  // class 1
    }
  }

  // P1 shape gradients per congruence class, grad lambda_k = (y_{k+1}-y_{k+2},
  // x_{k+2}-x_{k+1}) / (2A) with indices mod 3.
  // Class 0 vertices: (0,0), (hx,0), (hx,hy). Class 1: (0,0), (hx,hy), (0,hy).
  const double ix = 1.0 / m.hx, iy = 1.0 / m.hy;
  m.grads[0] = {{{{-ix, 0.0}}, {{ix, -iy}}, {{0.0, iy}}}};
  m.grads[1] = {{{{0.0, -iy}}, {{ix, 0.0}}, {{-ix, iy}}}};

  // Dof numbering with Dirichlet dofs eliminated.
  m.free_dof_of.assign(static_cast<std::size_t>(2) * m.n_nodes(), -1);
  for (int v = 0; v < m.n_nodes(); ++v) {
    if (m.dirichlet[v]) continue;
    for (int c = 0; c < 2; ++c) {
      m.free_dof_of[2 * v + c] = m.n_free_dofs;
      m.dof_of_free.push_back(2 * v + c);
      ++m.n_free_dofs;
    }
  }
  return m;
}

bool CoarseGrid::is_interior_node(int cn) const {
  int I = cn % (Nx + 1), J = cn / (Nx + 1);
  return I > 0 && I < Nx && J > 0 && J < Ny;
}

CoarseGrid build_coarse_grid(const FineMesh& mesh, int Nx, int Ny) {
  if (Nx < 1 || Ny < 1) throw std::invalid_argument("build_coarse_grid: Nx, Ny must be positive");
  if (mesh.nx % Nx != 0 || mesh.ny % Ny != 0)
    throw std::invalid_argument("build_coarse_grid: fine grid " + std::to_string(mesh.nx) + "x" +
                                std::to_string(mesh.ny) + " does not nest in coarse grid " +
                                std::to_string(Nx) + "x" + std::to_string(Ny));

  CoarseGrid g;
  g.Nx = Nx;
  g.Ny = Ny;
  g.H = 1.0 / Nx;
  g.cells_x = mesh.nx / Nx;
  g.cells_y = mesh.ny / Ny;

  g.coarse_node_to_fine_node.reserve(static_cast<std::size_t>(Nx + 1) * (Ny + 1));
  for (int J = 0; J <= Ny; ++J)
    for (int I = 0; I <= Nx; ++I)
      g.coarse_node_to_fine_node.push_back(mesh.node_index(I * g.cells_x, J * g.cells_y));

  g.coarse_cell_to_fine_triangles.resize(static_cast<std::size_t>(Nx) * Ny);
  for (int J = 0; J < Ny; ++J) {
    for (int I = 0; I < Nx; ++I) {
      auto& tris = g.coarse_cell_to_fine_triangles[g.coarse_cell_index(I, J)];
      tris.reserve(static_cast<std::size_t>(2) * g.cells_x * g.cells_y);
      for (int j = J * g.cells_y; j < (J + 1) * g.cells_y; ++j) {
        for (int i = I * g.cells_x; i < (I + 1) * g.cells_x; ++i) {
          int cell = j * mesh.nx + i;
          tris.push_back(2 * cell);
          tris.push_back(2 * cell + 1);
        }
      }
    }
  }

  for (int J = 1; J < Ny; ++J)
    for (int I = 1; I < Nx; ++I)
      g.interior_coarse_nodes.push_back(g.coarse_node_index(I, J));
  return g;
}

int Neighborhood::local_node_of(int fine_node) const {
  auto it = std::lower_bound(fine_nodes.begin(), fine_nodes.end(), fine_node);
  if (it == fine_nodes.end() || *it != fine_node) return -1;
  return static_cast<int>(it - fine_nodes.begin());
}

Neighborhood neighborhood(const CoarseGrid& grid, const FineMesh& mesh, int i) {
  if (i < 0 || i >= grid.n_coarse_nodes())
    throw std::invalid_argument("neighborhood: coarse node index out of range");
  if (!grid.is_interior_node(i))
    throw std::invalid_argument("neighborhood: coarse node " + std::to_string(i) +
                                " is on the domain boundary");

  Neighborhood nb;
  nb.coarse_node = i;
  int I = i % (grid.Nx + 1), J = i / (grid.Nx + 1);
  nb.ci = I;
  nb.cj = J;
  for (int dj = -1; dj <= 0; ++dj)
    for (int di = -1; di <= 0; ++di)
      nb.coarse_cells.push_back(grid.coarse_cell_index(I + di, J + dj));

  // Patch extent in fine node coordinates.
  int i0 = (I - 1) * grid.cells_x, i1 = (I + 1) * grid.cells_x;
  int j0 = (J - 1) * grid.cells_y, j1 = (J + 1) * grid.cells_y;

  nb.fine_nodes.reserve(static_cast<std::size_t>(i1 - i0 + 1) * (j1 - j0 + 1));
  for (int j = j0; j <= j1; ++j)
    for (int ii = i0; ii <= i1; ++ii)
      nb.fine_nodes.push_back(mesh.node_index(ii, j));
  // Row-major construction is already ascending.

  for (int c : nb.coarse_cells)
    for (int t : grid.coarse_cell_to_fine_triangles[c])
      nb.triangles.push_back(t);
  std::sort(nb.triangles.begin(), nb.triangles.end());

  nb.on_patch_boundary.resize(nb.fine_nodes.size());
  for (std::size_t k = 0; k < nb.fine_nodes.size(); ++k) {
    int v = nb.fine_nodes[k];
    int vi = v % (mesh.nx + 1), vj = v / (mesh.nx + 1);
    nb.on_patch_boundary[k] = (vi == i0 || vi == i1 || vj == j0 || vj == j1) ? 1 : 0;
  }

  nb.local_to_global.assign(2 * nb.fine_nodes.size(), -1);
  for (std::size_t k = 0; k < nb.fine_nodes.size(); ++k) {
    int v = nb.fine_nodes[k];
    for (int c = 0; c < 2; ++c) {
      int g = mesh.free_dof_of[2 * v + c];
      int ld = static_cast<int>(2 * k) + c;
      nb.local_to_global[ld] = g;
      if (g >= 0) nb.free_dofs.push_back(ld);
      if (g >= 0 && !nb.on_patch_boundary[k]) nb.interior_dofs.push_back(ld);
    }
  }
  return nb;
}

} // namespace slfem
