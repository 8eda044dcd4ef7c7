#pragma once

// Nested uniform triangulations of the unit square and the coarse-node
// neighborhoods used by the multiscale basis construction.
//
// The fine mesh splits every grid cell along the diagonal from its
// lower-left to its upper-right corner, giving two congruence classes of
// triangles. Nodes are numbered row-major from the bottom row; each cell
// contributes its lower-right triangle first, then its upper-left one.

#include <array>
#include <cstdint>
#include <vector>

namespace slfem {

struct FineMesh {
  int nx = 0, ny = 0;     // cells per axis
  double hx = 0, hy = 0;  // cell edge lengths
  double h = 0;           // mesh size, 1/nx

  std::vector<std::array<double, 2>> nodes;      // row-major, (nx+1)*(ny+1)
  std::vector<std::array<int, 3>> triangles;     // counterclockwise
  std::vector<std::uint8_t> dirichlet;           // node on the domain boundary

  // P1 shape-function gradients, constant per congruence class:
  // grads[class][local vertex] = (d/dx, d/dy).
  std::array<std::array<std::array<double, 2>, 3>, 2> grads{};

  // Dirichlet elimination: dof 2*node+c -> free dof index, or -1.
  std::vector<int> free_dof_of;
  std::vector<int> dof_of_free;  // inverse map
  int n_free_dofs = 0;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int node_index(int i, int j) const { return j * (nx + 1) + i; }
  int tri_class(int t) const { return t & 1; }  // 0 = lower-right, 1 = upper-left
  double tri_area() const { return 0.5 * hx * hy; }
  std::array<double, 2> centroid(int t) const;
};

// nx, ny >= 2; throws std::invalid_argument otherwise.
FineMesh build_fine_mesh(int nx, int ny);

struct CoarseGrid {
  int Nx = 0, Ny = 0;
  double H = 0;  // 1/Nx
  int cells_x = 0, cells_y = 0;  // fine cells per coarse cell, per axis

  std::vector<int> coarse_node_to_fine_node;               // (Nx+1)*(Ny+1)
  std::vector<std::vector<int>> coarse_cell_to_fine_triangles;  // Nx*Ny
  std::vector<int> interior_coarse_nodes;                  // (Nx-1)*(Ny-1)

  int n_coarse_nodes() const { return (Nx + 1) * (Ny + 1); }
  int n_coarse_cells() const { return Nx * Ny; }
  int coarse_node_index(int I, int J) const { return J * (Nx + 1) + I; }
  int coarse_cell_index(int I, int J) const { return J * Nx + I; }
  bool is_interior_node(int cn) const;
};

// Requires nx % Nx == 0 and ny % Ny == 0 (nesting).
CoarseGrid build_coarse_grid(const FineMesh& mesh, int Nx, int Ny);

// Patch of coarse cells sharing one coarse node, with its local dof maps.
// Local nodes are the fine nodes of the closed patch, sorted ascending;
// local dof 2*k+c belongs to local node k, component c.
struct Neighborhood {
  int coarse_node = -1;
  int ci = -1, cj = -1;                    // coarse node grid coordinates
  std::vector<int> coarse_cells;           // 4 for an interior node
  std::vector<int> fine_nodes;             // sorted ascending
  std::vector<int> triangles;              // fine triangles covering the patch
  std::vector<std::uint8_t> on_patch_boundary;  // per local node
  std::vector<int> free_dofs;              // local dofs minus global Dirichlet
  std::vector<int> local_to_global;        // local dof -> global free dof or -1
  std::vector<int> interior_dofs;          // local dofs strictly inside the patch

  int n_local_nodes() const { return static_cast<int>(fine_nodes.size()); }
  int local_node_of(int fine_node) const;  // -1 if not in the patch
};

// i must index an interior coarse node.
Neighborhood neighborhood(const CoarseGrid& grid, const FineMesh& mesh, int i);

} // namespace slfem
