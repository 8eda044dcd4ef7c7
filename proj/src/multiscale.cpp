#include "slfem/multiscale.hpp"

#include <lapacke.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace slfem {

namespace {

using clock_type = std::chrono::steady_clock;

double ms_since(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

} // namespace

double PouFunction::value_at(int fine_node) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), fine_node);
  if (it == nodes.end() || *it != fine_node) return 0.0;
  return values[static_cast<std::size_t>(it - nodes.begin())];
}

namespace {

// Bilinear hat of coarse node (I,J) evaluated at (x,y).
double hat_value(const CoarseGrid& grid, int I, int J, double x, double y) {
  double Hx = 1.0 / grid.Nx, Hy = 1.0 / grid.Ny;
  double vx = 1.0 - std::abs(x - I * Hx) / Hx;
  double vy = 1.0 - std::abs(y - J * Hy) / Hy;
  return std::max(0.0, vx) * std::max(0.0, vy);
}

// Sorted fine nodes of the closed patch of coarse node (I,J), clipped to the
// domain.
std::vector<int> patch_nodes(const FineMesh& mesh, const CoarseGrid& grid, int I, int J) {
  int i0 = std::max(0, (I - 1) * grid.cells_x), i1 = std::min(mesh.nx, (I + 1) * grid.cells_x);
  int j0 = std::max(0, (J - 1) * grid.cells_y), j1 = std::min(mesh.ny, (J + 1) * grid.cells_y);
  std::vector<int> nodes;
  nodes.reserve(static_cast<std::size_t>(i1 - i0 + 1) * (j1 - j0 + 1));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) nodes.push_back(mesh.node_index(i, j));
  return nodes;
}

} // namespace

PartitionOfUnity build_pou(const FineMesh& mesh, const CoarseGrid& grid,
                           const std::vector<double>& kappa, PouMode mode, const ExecPolicy& ex) {
  PartitionOfUnity pou;
  pou.mode = mode;
  pou.chi.resize(grid.n_coarse_nodes());

  for (int cn = 0; cn < grid.n_coarse_nodes(); ++cn) {
    int I = cn % (grid.Nx + 1), J = cn / (grid.Nx + 1);
    auto& chi = pou.chi[cn];
    chi.nodes = patch_nodes(mesh, grid, I, J);
    chi.values.assign(chi.nodes.size(), 0.0);
    for (std::size_t k = 0; k < chi.nodes.size(); ++k) {
      const auto& p = mesh.nodes[chi.nodes[k]];
      chi.values[k] = hat_value(grid, I, J, p[0], p[1]);
    }
  }

  if (mode == PouMode::Msfem) {
    // Per coarse cell: harmonic extension of the four corner hats. The cell
    // solves are independent; results are gathered serially afterwards.
    const int ncx = grid.cells_x, ncy = grid.cells_y;
    const int nodes_per_cell = (ncx + 1) * (ncy + 1);
    std::vector<Eigen::MatrixXd> cell_solutions(grid.n_coarse_cells());

    auto solve_cell = [&](int cell) {
      int CI = cell % grid.Nx, CJ = cell / grid.Nx;
      // Local node k = jj*(ncx+1)+ii maps to fine node (CI*ncx+ii, CJ*ncy+jj).
      auto fine_of = [&](int k) {
        int ii = k % (ncx + 1), jj = k / (ncx + 1);
        return mesh.node_index(CI * ncx + ii, CJ * ncy + jj);
      };
      auto is_cell_boundary = [&](int k) {
        int ii = k % (ncx + 1), jj = k / (ncx + 1);
        return ii == 0 || ii == ncx || jj == 0 || jj == ncy;
      };

      std::vector<int> interior;  // local node ids
      std::vector<int> interior_pos(nodes_per_cell, -1);
      for (int k = 0; k < nodes_per_cell; ++k)
        if (!is_cell_boundary(k)) {
          interior_pos[k] = static_cast<int>(interior.size());
          interior.push_back(k);
        }
      const int ni = static_cast<int>(interior.size());

      // Boundary data: the four corner hats restricted to the cell boundary.
      Eigen::MatrixXd bdata = Eigen::MatrixXd::Zero(nodes_per_cell, 4);
      const int corner_nodes[4] = {grid.coarse_node_index(CI, CJ),
                                   grid.coarse_node_index(CI + 1, CJ),
                                   grid.coarse_node_index(CI, CJ + 1),
                                   grid.coarse_node_index(CI + 1, CJ + 1)};
      for (int k = 0; k < nodes_per_cell; ++k) {
        if (!is_cell_boundary(k)) continue;
        const auto& p = mesh.nodes[fine_of(k)];
        for (int m = 0; m < 4; ++m) {
          int cI = corner_nodes[m] % (grid.Nx + 1), cJ = corner_nodes[m] / (grid.Nx + 1);
          bdata(k, m) = hat_value(grid, cI, cJ, p[0], p[1]);
        }
      }

      // Scalar kappa-weighted stiffness on the cell; eliminate boundary
      // nodes against the hat data.
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(ni, ni);
      Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ni, 4);
      const double area = mesh.tri_area();
      for (int jj = 0; jj < ncy; ++jj) {
        for (int ii = 0; ii < ncx; ++ii) {
          int fc = (CJ * ncy + jj) * mesh.nx + (CI * ncx + ii);
          for (int half = 0; half < 2; ++half) {
            int t = 2 * fc + half;
            const auto& g = mesh.grads[half];
            const double kt = kappa[t] * area;
            int loc[3];
            {
              const auto& tri = mesh.triangles[t];
              for (int v = 0; v < 3; ++v) {
                int fi = tri[v] % (mesh.nx + 1) - CI * ncx;
                int fj = tri[v] / (mesh.nx + 1) - CJ * ncy;
                loc[v] = fj * (ncx + 1) + fi;
              }
            }
            for (int a = 0; a < 3; ++a) {
              int pa = interior_pos[loc[a]];
              if (pa < 0) continue;
              for (int bidx = 0; bidx < 3; ++bidx) {
                double s = kt * (g[a][0] * g[bidx][0] + g[a][1] * g[bidx][1]);
                int pb = interior_pos[loc[bidx]];
                if (pb >= 0)
                  S(pa, pb) += s;
                else
                  for (int m = 0; m < 4; ++m) rhs(pa, m) -= s * bdata(loc[bidx], m);
              }
            }
          }
        }
      }

      Eigen::MatrixXd sol = bdata;
      if (ni > 0) {
        Eigen::MatrixXd x = dense_spd_solve(S, rhs);
        for (int q = 0; q < ni; ++q) sol.row(interior[q]) = x.row(q);
      }
      cell_solutions[cell] = sol;
    };

    if (ex.deterministic) {
      for (int cell = 0; cell < grid.n_coarse_cells(); ++cell) solve_cell(cell);
    } else {
#pragma omp parallel for schedule(dynamic)
      for (int cell = 0; cell < grid.n_coarse_cells(); ++cell) solve_cell(cell);
    }

    // Gather per-corner values into the chi fields.
    for (int cell = 0; cell < grid.n_coarse_cells(); ++cell) {
      int CI = cell % grid.Nx, CJ = cell / grid.Nx;
      const int corners[4][2] = {{CI, CJ}, {CI + 1, CJ}, {CI, CJ + 1}, {CI + 1, CJ + 1}};
      const auto& sol = cell_solutions[cell];
      for (int m = 0; m < 4; ++m) {
        auto& chi = pou.chi[grid.coarse_node_index(corners[m][0], corners[m][1])];
        for (int jj = 0; jj <= grid.cells_y; ++jj) {
          for (int ii = 0; ii <= grid.cells_x; ++ii) {
            int fine = mesh.node_index(CI * grid.cells_x + ii, CJ * grid.cells_y + jj);
            auto it = std::lower_bound(chi.nodes.begin(), chi.nodes.end(), fine);
            chi.values[static_cast<std::size_t>(it - chi.nodes.begin())] =
                sol(jj * (grid.cells_x + 1) + ii, m);
          }
        }
      }
    }
  }

  // sum over interior coarse nodes of H^2 |grad chi_i|^2 per triangle.
  pou.grad_weight.assign(mesh.n_triangles(), 0.0);
  const double H2 = (1.0 / grid.Nx) * (1.0 / grid.Ny);
  for (int cn : grid.interior_coarse_nodes) {
    const auto& chi = pou.chi[cn];
    int I = cn % (grid.Nx + 1), J = cn / (grid.Nx + 1);
    for (int dj = -1; dj <= 0; ++dj) {
      for (int di = -1; di <= 0; ++di) {
        for (int t : grid.coarse_cell_to_fine_triangles[grid.coarse_cell_index(I + di, J + dj)]) {
          const auto& tri = mesh.triangles[t];
          const auto& g = mesh.grads[mesh.tri_class(t)];
          double gx = 0, gy = 0;
          for (int v = 0; v < 3; ++v) {
            double cv = chi.value_at(tri[v]);
            gx += cv * g[v][0];
            gy += cv * g[v][1];
          }
          pou.grad_weight[t] += H2 * (gx * gx + gy * gy);
        }
      }
    }
  }
  return pou;
}

std::vector<int> snapshot_dofs(const Neighborhood& nb) {
  std::vector<int> dofs(2 * nb.fine_nodes.size());
  for (std::size_t i = 0; i < dofs.size(); ++i) dofs[i] = static_cast<int>(i);
  return dofs;
}

namespace {

int subset_bandwidth(const FineMesh& mesh, const Neighborhood& nb, const std::vector<int>& pos) {
  int kd = 0;
  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    int loc[3];
    for (int k = 0; k < 3; ++k) loc[k] = nb.local_node_of(tri[k]);
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) {
        int pa = pos[2 * loc[k] + c];
        if (pa < 0) continue;
        for (int l = 0; l < 3; ++l)
          for (int d = 0; d < 2; ++d) {
            int pb = pos[2 * loc[l] + d];
            if (pb >= 0) kd = std::max(kd, std::abs(pa - pb));
          }
      }
  }
  return kd;
}

} // namespace

// Band assembly of the local kappa-weighted stiffness.
SymBand local_stiffness_band(const FineMesh& mesh, const Neighborhood& nb,
                             const std::vector<double>& kappa,
                             const std::vector<int>& local_dofs) {
  const int n = static_cast<int>(local_dofs.size());
  SymBand A;
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (int p = 0; p < n; ++p) pos[local_dofs[p]] = p;
  A.resize(n, subset_bandwidth(mesh, nb, pos));
  const double area = mesh.tri_area();

  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.grads[mesh.tri_class(t)];
    const double kt = kappa[t] * area;
    int loc[3];
    for (int k = 0; k < 3; ++k) loc[k] = nb.local_node_of(tri[k]);
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) {
        int pa = pos[2 * loc[k] + c];
        if (pa < 0) continue;
        for (int l = 0; l < 3; ++l)
          for (int d = 0; d < 2; ++d) {
            int pb = pos[2 * loc[l] + d];
            if (pb >= 0 && pa >= pb)
              A.at(pa, pb) += kt * sym_grad_product(g, k, c, l, d);
          }
      }
  }
  return A;
}

SymBand weighted_mass_band(const FineMesh& mesh, const Neighborhood& nb,
                           const std::vector<double>& kappa,
                           const std::vector<double>& pou_gradients,
                           const std::vector<int>& local_dofs) {
  const int n = static_cast<int>(local_dofs.size());
  SymBand M;
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (int p = 0; p < n; ++p) pos[local_dofs[p]] = p;
  M.resize(n, subset_bandwidth(mesh, nb, pos));
  const double area12 = mesh.tri_area() / 12.0;

  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    const double wt = kappa[t] * pou_gradients[t] * area12;
    int loc[3];
    for (int k = 0; k < 3; ++k) loc[k] = nb.local_node_of(tri[k]);
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) {
        const double m = wt * (k == l ? 2.0 : 1.0);
        for (int c = 0; c < 2; ++c) {
          int pa = pos[2 * loc[k] + c], pb = pos[2 * loc[l] + c];
          if (pa >= 0 && pb >= 0 && pa >= pb) M.at(pa, pb) += m;
        }
      }
  }
  return M;
}

Eigen::MatrixXd rigid_block(const FineMesh& mesh, const Neighborhood& nb, const SymBand& M,
                            const std::vector<int>& local_dofs) {
  const int n = static_cast<int>(local_dofs.size());
  double cx = 0, cy = 0;
  for (int v : nb.fine_nodes) {
    cx += mesh.nodes[v][0];
    cy += mesh.nodes[v][1];
  }
  cx /= nb.fine_nodes.size();
  cy /= nb.fine_nodes.size();

  // Diagonal and antidiagonal translations first, then the rotation; with one
  // basis per node this keeps both displacement components represented.
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::MatrixXd R(n, 3);
  for (int p = 0; p < n; ++p) {
    int ld = local_dofs[p];
    const auto& xy = mesh.nodes[nb.fine_nodes[ld / 2]];
    if (ld % 2 == 0) {
      R(p, 0) = s;
      R(p, 1) = s;
      R(p, 2) = -(xy[1] - cy);
    } else {
      R(p, 0) = s;
      R(p, 1) = -s;
      R(p, 2) = xy[0] - cx;
    }
  }
  // M-orthonormalize (modified Gram-Schmidt in the M inner product).
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd Mv = M.multiply(Eigen::VectorXd(R.col(j)));
    for (int i = 0; i < j; ++i) {
      double c = R.col(i).dot(Mv);
      R.col(j) -= c * R.col(i);
    }
    Mv = M.multiply(Eigen::VectorXd(R.col(j)));
    R.col(j) /= std::sqrt(R.col(j).dot(Mv));
  }
  return R;
}

OfflineBasisResult offline_basis(const FineMesh& mesh, const Neighborhood& nb,
                                 const std::vector<double>& kappa, const PartitionOfUnity& pou,
                                 int count, const EigOptions& eig, Eigen::MatrixXd* warm) {
  // Snapshot set: every patch dof, including those on the domain boundary.
  // The chi factor vanishes there, so the resulting bases stay conforming,
  // and the free patch always carries the exact rigid-motion triple.
  const std::vector<int> dofs = snapshot_dofs(nb);
  const int n_loc = static_cast<int>(dofs.size());
  if (count < 1) throw std::invalid_argument("offline_basis: count must be >= 1");
  if (count + 1 > n_loc)
    throw std::invalid_argument("offline_basis: count + 1 = " + std::to_string(count + 1) +
                                " exceeds local snapshot dof count " + std::to_string(n_loc));

  SymBand A = local_stiffness_band(mesh, nb, kappa, dofs);
  SymBand M = weighted_mass_band(mesh, nb, kappa, pou.grad_weight, dofs);

  // Deflate the rigid nullspace analytically; this also pins the degenerate
  // bottom cluster deterministically.
  Eigen::MatrixXd R = rigid_block(mesh, nb, M, dofs);

  std::vector<EigenPair> pairs = generalized_eigh_band(
      A, M, count + 1, &R, warm, eig.method == EigOptions::Method::Dense);

  const auto& chi = pou.chi[nb.coarse_node];
  OfflineBasisResult out;
  out.eigenvalues.reserve(count + 1);
  for (const auto& p : pairs) out.eigenvalues.push_back(p.lambda);

  out.bases.reserve(count);
  for (int j = 0; j < count; ++j) {
    LocalBasis b;
    b.coarse_node = nb.coarse_node;
    b.ci = nb.ci;
    b.cj = nb.cj;
    b.kind = BasisKind::Offline;
    b.nodes = nb.fine_nodes;
    b.values.assign(2 * nb.fine_nodes.size(), 0.0);
    b.lambda = pairs[j].lambda;
    for (int ld = 0; ld < n_loc; ++ld) {
      int node = nb.fine_nodes[ld / 2];
      b.values[ld] = pairs[j].vector(ld) * chi.value_at(node);
    }
    out.bases.push_back(std::move(b));
  }
  return out;
}

MultiscaleSpace MultiscaleSpace::identity(int n_free_dofs) {
  MultiscaleSpace s;
  s.columns.resize(n_free_dofs);
  for (int d = 0; d < n_free_dofs; ++d) {
    s.columns[d].coarse_node = -1;
    s.columns[d].dofs = {d};
    s.columns[d].vals = {1.0};
  }
  return s;
}

namespace {

// Sparse column from a local basis: global free dofs ascending, zeros dropped.
SpaceColumn make_column(const LocalBasis& basis, const FineMesh& mesh) {
  SpaceColumn col;
  col.coarse_node = basis.coarse_node;
  col.ci = basis.ci;
  col.cj = basis.cj;
  col.kind = basis.kind;
  for (std::size_t k = 0; k < basis.nodes.size(); ++k) {
    for (int c = 0; c < 2; ++c) {
      double v = basis.values[2 * k + c];
      if (v == 0.0) continue;
      int g = mesh.free_dof_of[2 * basis.nodes[k] + c];
      if (g >= 0) {
        col.dofs.push_back(g);
        col.vals.push_back(v);
      }
    }
  }
  return col;
}

double column_energy_norm(const SparseSpd& A, const SpaceColumn& col, std::vector<double>& scratch,
                          std::vector<int>& touched) {
  touched.clear();
  for (std::size_t k = 0; k < col.dofs.size(); ++k) {
    int d = col.dofs[k];
    A.add_scaled_row(d, col.vals[k], scratch.data());
    for (int p = A.row_ptr[d]; p < A.row_ptr[d + 1]; ++p) touched.push_back(A.cols[p]);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < col.dofs.size(); ++k) s += col.vals[k] * scratch[col.dofs[k]];
  for (int d : touched) scratch[d] = 0.0;
  return std::sqrt(std::max(0.0, s));
}

// G = P'AP and g = P'b for the coarse system.
void project_operator(const MultiscaleSpace& space, const SparseSpd& A,
                      const std::vector<double>& b, Eigen::MatrixXd& G, Eigen::VectorXd& g,
                      const ExecPolicy& ex) {
  const int dim = space.dim();
  G.setZero(dim, dim);
  g.setZero(dim);

  auto process_column = [&](int j, std::vector<double>& scratch, std::vector<int>& touched) {
    const auto& pj = space.columns[j];
    touched.clear();
    int lo = A.n, hi = -1;  // support range of A*p_j, for pair pruning
    for (std::size_t k = 0; k < pj.dofs.size(); ++k) {
      int d = pj.dofs[k];
      A.add_scaled_row(d, pj.vals[k], scratch.data());
      for (int p = A.row_ptr[d]; p < A.row_ptr[d + 1]; ++p) {
        touched.push_back(A.cols[p]);
        lo = std::min(lo, A.cols[p]);
        hi = std::max(hi, A.cols[p]);
      }
    }
    double gb = 0.0;
    for (std::size_t k = 0; k < pj.dofs.size(); ++k) gb += pj.vals[k] * b[pj.dofs[k]];
    g(j) = gb;
    for (int i = 0; i <= j; ++i) {
      const auto& pi = space.columns[i];
      if (pi.ci >= 0 && pj.ci >= 0) {
        // both vanish on their patch boundaries: no coupling beyond one cell
        if (std::abs(pi.ci - pj.ci) > 1 || std::abs(pi.cj - pj.cj) > 1) continue;
      } else if (pi.dofs.front() > hi || pi.dofs.back() < lo) {
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < pi.dofs.size(); ++k) s += pi.vals[k] * scratch[pi.dofs[k]];
      G(i, j) = s;
      G(j, i) = s;
    }
    for (int d : touched) scratch[d] = 0.0;
  };

  if (ex.deterministic) {
    std::vector<double> scratch(A.n, 0.0);
    std::vector<int> touched;
    for (int j = 0; j < dim; ++j) process_column(j, scratch, touched);
  } else {
#pragma omp parallel
    {
      std::vector<double> scratch(A.n, 0.0);
      std::vector<int> touched;
#pragma omp for schedule(dynamic, 8)
      for (int j = 0; j < dim; ++j) process_column(j, scratch, touched);
    }
  }
}

} // namespace

MultiscaleSpace assemble_space(const std::vector<LocalBasis>& bases, const FineMesh& mesh,
                               const SparseSpd& A, bool check_rank) {
  if (bases.empty()) throw std::invalid_argument("assemble_space: no basis functions");

  MultiscaleSpace space;
  space.columns.reserve(bases.size());
  std::vector<double> scratch(A.n, 0.0);
  std::vector<int> touched;
  for (const auto& basis : bases) {
    SpaceColumn col = make_column(basis, mesh);
    if (col.dofs.empty())
      throw std::runtime_error("assemble_space: basis at coarse node " +
                               std::to_string(basis.coarse_node) + " is identically zero");
    double nrm = column_energy_norm(A, col, scratch, touched);
    if (!(nrm > 0.0))
      throw std::runtime_error("assemble_space: basis at coarse node " +
                               std::to_string(basis.coarse_node) + " has zero energy norm");
    for (auto& v : col.vals) v /= nrm;
    space.columns.push_back(std::move(col));
  }

  if (check_rank) {
    Eigen::MatrixXd G;
    Eigen::VectorXd g;
    std::vector<double> zero(A.n, 0.0);
    project_operator(space, A, zero, G, g, ExecPolicy{});
    Eigen::VectorXd evals = sym_eigenvalues(G);
    if (evals(0) < 1e-12) {
      // Identify the worst-represented coarse nodes from the near-null vector.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
      Eigen::VectorXd v = es.eigenvectors().col(0);
      std::string nodes;
      for (int rep = 0; rep < 3; ++rep) {
        int arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        nodes += (rep ? ", " : "") + std::to_string(space.columns[arg].coarse_node);
        v(arg) = 0.0;
      }
      throw std::runtime_error(
          "assemble_space: rank-deficient space (smallest Gram eigenvalue " +
          std::to_string(evals(0)) + "), offending coarse nodes: " + nodes);
    }
  }
  return space;
}

void append_basis(MultiscaleSpace& space, const LocalBasis& basis, const FineMesh& mesh,
                  const SparseSpd& A) {
  SpaceColumn col = make_column(basis, mesh);
  if (col.dofs.empty()) throw std::runtime_error("append_basis: zero basis");
  std::vector<double> scratch(A.n, 0.0);
  std::vector<int> touched;
  double nrm = column_energy_norm(A, col, scratch, touched);
  if (!(nrm > 0.0)) throw std::runtime_error("append_basis: zero energy norm");
  for (auto& v : col.vals) v /= nrm;
  space.columns.push_back(std::move(col));
}

CoarseSolveResult coarse_solve(const MultiscaleSpace& space, const SparseSpd& A,
                               const std::vector<double>& b, const FineMesh& mesh,
                               const ExecPolicy& ex) {
  if (space.dim() == 0) throw std::invalid_argument("coarse_solve: empty space");

  Eigen::MatrixXd G;
  Eigen::VectorXd g;
  project_operator(space, A, b, G, g, ex);

  Eigen::VectorXd c;
  try {
    c = cholesky_spd_solve(G, g);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("coarse_solve: singular coarse matrix (dimension " +
                             std::to_string(space.dim()) + "); the space lost rank");
  }

  CoarseSolveResult res;
  res.coeffs = c;
  std::vector<double> x(static_cast<std::size_t>(A.n), 0.0);
  for (int j = 0; j < space.dim(); ++j) {
    const auto& col = space.columns[j];
    for (std::size_t k = 0; k < col.dofs.size(); ++k) x[col.dofs[k]] += c(j) * col.vals[k];
  }
  res.u = expand_from_free(mesh, x);

  double bnorm = kernels::norm2(b, ex);
  res.galerkin_residual = bnorm > 0 ? (g - G * c).norm() / bnorm : 0.0;
  return res;
}

OnlineLocalSolver::OnlineLocalSolver(const FineMesh& mesh, const Neighborhood& nb,
                                     const std::vector<double>& kappa) {
  n_ = static_cast<int>(nb.interior_dofs.size());
  // interior-dof bandwidth in the interior ordering
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (int p = 0; p < n_; ++p) pos[nb.interior_dofs[p]] = p;
  kd_ = 0;
  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    int loc[3];
    for (int k = 0; k < 3; ++k) loc[k] = nb.local_node_of(tri[k]);
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) {
        int pa = pos[2 * loc[k] + c];
        if (pa < 0) continue;
        for (int l = 0; l < 3; ++l)
          for (int d = 0; d < 2; ++d) {
            int pb = pos[2 * loc[l] + d];
            if (pb >= 0) kd_ = std::max(kd_, std::abs(pa - pb));
          }
      }
  }
  factor_.assign(static_cast<std::size_t>(kd_ + 1) * n_, 0.0);
  const double area = mesh.tri_area();
  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.grads[mesh.tri_class(t)];
    const double kt = kappa[t] * area;
    int loc[3];
    for (int k = 0; k < 3; ++k) loc[k] = nb.local_node_of(tri[k]);
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) {
        int pa = pos[2 * loc[k] + c];
        if (pa < 0) continue;
        for (int l = 0; l < 3; ++l)
          for (int d = 0; d < 2; ++d) {
            int pb = pos[2 * loc[l] + d];
            if (pb >= 0 && pa >= pb)
              factor_[static_cast<std::size_t>(pb) * (kd_ + 1) + (pa - pb)] +=
                  kt * sym_grad_product(g, k, c, l, d);
          }
      }
  }
  if (LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', n_, kd_, factor_.data(), kd_ + 1) != 0)
    throw std::runtime_error("OnlineLocalSolver: banded Cholesky failed");
}

Eigen::VectorXd OnlineLocalSolver::solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd x = rhs;
  if (LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'L', n_, kd_, 1, factor_.data(), kd_ + 1, x.data(), n_) !=
      0)
    throw std::runtime_error("OnlineLocalSolver: banded solve failed");
  return x;
}

OnlineCandidate online_basis(const FineMesh& mesh, const Neighborhood& nb,
                             const std::vector<double>& kappa, const DisplacementField& u_ms,
                             const Eigen::VectorXd& patch_load, const OnlineLocalSolver& solver) {
  Eigen::VectorXd r = local_residual(mesh, nb, kappa, u_ms, patch_load);

  // Positions of the interior dofs within free_dofs.
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (std::size_t p = 0; p < nb.free_dofs.size(); ++p) pos[nb.free_dofs[p]] = static_cast<int>(p);

  const int ni = static_cast<int>(nb.interior_dofs.size());
  Eigen::VectorXd r_int(ni);
  for (int q = 0; q < ni; ++q) r_int(q) = r(pos[nb.interior_dofs[q]]);

  Eigen::VectorXd phi = solver.solve(r_int);

  OnlineCandidate cand;
  cand.r = std::sqrt(std::max(0.0, phi.dot(r_int)));
  cand.basis.coarse_node = nb.coarse_node;
  cand.basis.ci = nb.ci;
  cand.basis.cj = nb.cj;
  cand.basis.kind = BasisKind::Online;
  cand.basis.nodes = nb.fine_nodes;
  cand.basis.values.assign(2 * nb.fine_nodes.size(), 0.0);
  cand.basis.energy_norm = cand.r;
  for (int q = 0; q < ni; ++q) cand.basis.values[nb.interior_dofs[q]] = phi(q);
  return cand;
}

OnlineCandidate online_basis(const FineMesh& mesh, const Neighborhood& nb,
                             const std::vector<double>& kappa, const DisplacementField& u_ms,
                             const Eigen::VectorXd& patch_load) {
  return online_basis(mesh, nb, kappa, u_ms, patch_load, OnlineLocalSolver(mesh, nb, kappa));
}

EnrichStep online_enrich_step(MultiscaleSpace& space, const FineMesh& mesh, const SparseSpd& A,
                              double theta, std::vector<OnlineCandidate>& candidates,
                              const std::vector<double>* lambda_next) {
  const int n = static_cast<int>(candidates.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (candidates[a].r != candidates[b].r) return candidates[a].r > candidates[b].r;
    return candidates[a].basis.coarse_node < candidates[b].basis.coarse_node;
  });

  EnrichStep step;
  double total = 0.0;
  for (int k = 0; k < n; ++k) total += candidates[order[k]].r * candidates[order[k]].r;
  step.sum_r2 = total;

  double prefix = 0.0;
  int k_p = 0;
  while (k_p < n && prefix < theta * total) {
    prefix += candidates[order[k_p]].r * candidates[order[k_p]].r;
    ++k_p;
  }
  step.k_p = k_p;

  double lam = std::numeric_limits<double>::infinity();
  for (int k = 0; k < k_p; ++k) {
    int idx = order[k];
    append_basis(space, candidates[idx].basis, mesh, A);
    if (lambda_next) lam = std::min(lam, (*lambda_next)[idx]);
  }
  step.lambda_min_selected = k_p > 0 && lambda_next ? lam : 0.0;
  return step;
}

OnlineSolveResult online_adaptive_solve(MultiscaleSpace& space, const FineMesh& mesh,
                                        const CoarseGrid& grid,
                                        const std::vector<Neighborhood>& neighborhoods,
                                        const SparseSpd& A, const std::vector<double>& b,
                                        const std::vector<double>& kappa,
                                        const std::vector<Eigen::VectorXd>& patch_loads,
                                        const UpdatePolicy& policy, int max_iterations,
                                        const std::vector<double>* lambda_next,
                                        const ExecPolicy& ex) {
  (void)grid;
  OnlineSolveResult out;
  const int n_nb = static_cast<int>(neighborhoods.size());
  const int dim_cap = std::max(1, static_cast<int>(policy.dim_cap_fraction * A.n));
  std::vector<OnlineLocalSolver> solvers;  // built lazily at the first sweep

  for (int m = 0;; ++m) {
    CoarseSolveResult sol = coarse_solve(space, A, b, mesh, ex);
    out.u = sol.u;
    if (m == max_iterations || space.dim() >= dim_cap) break;

    if (solvers.empty()) {
      solvers.resize(n_nb);
      if (ex.deterministic) {
        for (int i = 0; i < n_nb; ++i)
          solvers[i] = OnlineLocalSolver(mesh, neighborhoods[i], kappa);
      } else {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < n_nb; ++i)
          solvers[i] = OnlineLocalSolver(mesh, neighborhoods[i], kappa);
      }
    }
    std::vector<OnlineCandidate> candidates(n_nb);
    if (ex.deterministic) {
      for (int i = 0; i < n_nb; ++i)
        candidates[i] =
            online_basis(mesh, neighborhoods[i], kappa, sol.u, patch_loads[i], solvers[i]);
    } else {
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < n_nb; ++i)
        candidates[i] =
            online_basis(mesh, neighborhoods[i], kappa, sol.u, patch_loads[i], solvers[i]);
    }

    double sum_r2 = 0.0;
    for (const auto& c : candidates) sum_r2 += c.r * c.r;
    if (sum_r2 <= policy.online_tol) {
      out.log.push_back({sum_r2, 0, space.dim(), 0.0});
      break;
    }

    EnrichStep step = online_enrich_step(space, mesh, A, policy.theta, candidates, lambda_next);
    out.log.push_back({step.sum_r2, step.k_p, space.dim(), step.lambda_min_selected});
  }
  return out;
}

double kappa_change_indicator(const FineMesh& mesh, const std::vector<double>& kappa_old,
                              const std::vector<double>& kappa_new) {
  if (kappa_old.size() != kappa_new.size())
    throw std::invalid_argument("kappa_change_indicator: field length mismatch");
  const double area = mesh.tri_area();
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < kappa_old.size(); ++t) {
    double d = kappa_old[t] - kappa_new[t];
    num += area * d * d;
    den += area * kappa_old[t] * kappa_old[t];
  }
  return std::sqrt(num / den);
}

namespace {

void validate_policy(const UpdatePolicy& p) {
  if (!(p.theta > 0.0) || p.theta > 1.0)
    throw std::invalid_argument("UpdatePolicy: theta must be in (0, 1]");
  if (p.nb_off < 1) throw std::invalid_argument("UpdatePolicy: nb_off must be >= 1");
  if (p.nb_on < 0) throw std::invalid_argument("UpdatePolicy: nb_on must be >= 0");
  if (std::isnan(p.delta) || p.delta < 0.0)
    throw std::invalid_argument("UpdatePolicy: delta must be >= 0 or inf");
  if (!(p.online_tol >= 0.0)) throw std::invalid_argument("UpdatePolicy: online_tol must be >= 0");
  if (!(p.dim_cap_fraction > 0.0))
    throw std::invalid_argument("UpdatePolicy: dim_cap_fraction must be > 0");
}

} // namespace

GmsfemResult gmsfem_picard(const FineMesh& mesh, const CoarseGrid& grid, const BetaField& beta,
                           const SourceFn& f, const UpdatePolicy& policy,
                           const PicardOptions& picard, const MultiscaleSpace* initial_space) {
  validate_policy(policy);
  if (!(picard.delta0 > 0.0)) throw std::invalid_argument("gmsfem_picard: delta0 must be > 0");

  const auto t_start = clock_type::now();
  const ExecPolicy& ex = picard.exec;

  GmsfemResult res;
  StiffnessAssembler assembler(mesh);
  const std::vector<double> b = assemble_load(mesh, f, ex);

  std::vector<Neighborhood> neighborhoods;
  std::vector<Eigen::VectorXd> patch_loads;
  neighborhoods.reserve(grid.interior_coarse_nodes.size());
  for (int cn : grid.interior_coarse_nodes) neighborhoods.push_back(neighborhood(grid, mesh, cn));
  patch_loads.reserve(neighborhoods.size());
  for (const auto& nb : neighborhoods) patch_loads.push_back(local_load(mesh, nb, f));
  const int n_nb = static_cast<int>(neighborhoods.size());

  std::vector<Eigen::MatrixXd> warm(n_nb);
  std::vector<double> lambda_next(n_nb, 0.0);

  DisplacementField u_full(static_cast<std::size_t>(2) * mesh.n_nodes(), 0.0);
  std::vector<double> u_free(static_cast<std::size_t>(mesh.n_free_dofs), 0.0);
  std::vector<double> kappa_basis = kappa_field(mesh, beta, u_full, picard.clamp_eps, nullptr, ex);

  MultiscaleSpace space;

  // Builds offline bases for the linearization state kappa_build at u_build,
  // then runs the online enrichment against the same operator.
  auto build_space = [&](const std::vector<double>& kappa_build) {
    const auto t0 = clock_type::now();
    PartitionOfUnity pou = build_pou(mesh, grid, kappa_build, policy.pou, ex);

    std::vector<OfflineBasisResult> results(n_nb);
    auto run_one = [&](int i) {
      results[i] = offline_basis(mesh, neighborhoods[i], kappa_build, pou, policy.nb_off,
                                 policy.eig, &warm[i]);
    };
    if (ex.deterministic) {
      for (int i = 0; i < n_nb; ++i) run_one(i);
    } else {
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < n_nb; ++i) run_one(i);
    }

    std::vector<LocalBasis> bases;
    bases.reserve(static_cast<std::size_t>(n_nb) * policy.nb_off);
    for (int i = 0; i < n_nb; ++i) {
      lambda_next[i] = results[i].eigenvalues[policy.nb_off];
      for (auto& bfn : results[i].bases) bases.push_back(std::move(bfn));
    }

    SparseSpd A_build = assembler.assemble(kappa_build, ex);
    int gen = space.generation;
    std::vector<SpaceColumn> retained;
    for (auto& col : space.columns)
      if (col.kind == BasisKind::Online) retained.push_back(std::move(col));
    space = assemble_space(bases, mesh, A_build, policy.check_rank);
    space.generation = gen + 1;
    // Online bases accumulate across rebuilds (only the offline block is
    // recomputed); renormalize them against the new operator.
    if (!retained.empty()) {
      std::vector<double> scratch(A_build.n, 0.0);
      std::vector<int> touched;
      for (auto& col : retained) {
        double nrm = column_energy_norm(A_build, col, scratch, touched);
        if (!(nrm > 0.0)) continue;
        for (auto& v : col.vals) v /= nrm;
        space.columns.push_back(std::move(col));
      }
    }
    res.report.wall_offline_ms += ms_since(t0);
    ++res.report.basis_builds;

    if (policy.nb_on > 0) {
      const auto t1 = clock_type::now();
      int dim_before = space.dim();
      OnlineSolveResult onr =
          online_adaptive_solve(space, mesh, grid, neighborhoods, A_build, b, kappa_build,
                                patch_loads, policy, policy.nb_on, &lambda_next, ex);
      res.report.online_bases_total += space.dim() - dim_before;
      for (const auto& rec : onr.log) res.report.online_log.push_back(rec);
      res.report.wall_online_ms += ms_since(t1);
      return onr.log;
    }
    return std::vector<OnlineIterationRecord>{};
  };

  std::vector<OnlineIterationRecord> last_online_log;
  if (initial_space) {
    space = *initial_space;
  } else {
    last_online_log = build_space(kappa_basis);
  }

  for (int n = 0; n < picard.max_iter; ++n) {
    ClampCounter clamps;
    std::vector<double> kappa_n = kappa_field(mesh, beta, u_full, picard.clamp_eps, &clamps, ex);
    SparseSpd A = assembler.assemble(kappa_n, ex);

    const auto t_solve = clock_type::now();
    CoarseSolveResult sol = coarse_solve(space, A, b, mesh, ex);
    res.report.wall_coarse_ms += ms_since(t_solve);

    std::vector<double> x = restrict_to_free(mesh, sol.u);
    double change = std::numeric_limits<double>::infinity();
    if (n > 0) {
      std::vector<double> d(x.size()), tmp(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - u_free[i];
      if (picard.norm == ChangeNorm::Vh) {
        A.multiply(d.data(), tmp.data(), ex);
        double num = kernels::dot(d, tmp, ex);
        A.multiply(u_free.data(), tmp.data(), ex);
        double den = kernels::dot(u_free, tmp, ex);
        change = den > 0 ? std::sqrt(num / den)
                         : (num == 0 ? 0.0 : std::numeric_limits<double>::infinity());
      } else {
        double den = kernels::norm2(u_free, ex);
        double num = kernels::norm2(d, ex);
        change = den > 0 ? num / den : (num == 0 ? 0.0 : std::numeric_limits<double>::infinity());
      }
    }

    GmsIterationRecord rec;
    rec.change = change;
    rec.space_dim = space.dim();
    rec.clamps = clamps.total();
    rec.cg_like_dim = space.dim();
    rec.online_iterations = static_cast<int>(last_online_log.size());
    rec.sum_r2 = last_online_log.empty() ? 0.0 : last_online_log.back().sum_r2;
    last_online_log.clear();

    u_free = std::move(x);
    u_full = sol.u;

    if (n > 0 && change <= picard.delta0) {
      res.report.iterations.push_back(rec);
      res.report.converged = true;
      break;
    }

    std::vector<double> kappa_new = kappa_field(mesh, beta, u_full, picard.clamp_eps, nullptr, ex);
    rec.kappa_indicator = kappa_change_indicator(mesh, kappa_basis, kappa_new);

    if (rec.kappa_indicator > policy.delta && !initial_space && n + 1 < picard.max_iter) {
      rec.rebuilt = true;
      kappa_basis = kappa_new;
      last_online_log = build_space(kappa_basis);
    }
    res.report.iterations.push_back(rec);
  }

  ClampCounter final_clamps;
  (void)kappa_field(mesh, beta, u_full, picard.clamp_eps, &final_clamps, ex);
  res.report.final_clamps = final_clamps.total();
  res.u = u_full;
  res.space = std::move(space);
  res.report.wall_total_ms = ms_since(t_start);
  return res;
}

} // namespace slfem
