#include "slfem/fem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slfem {

void SparseSpd::multiply(const double* x, double* y, const ExecPolicy& ex) const {
  if (ex.deterministic) {
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += vals[k] * x[cols[k]];
      y[r] = s;
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += vals[k] * x[cols[k]];
      y[r] = s;
    }
  }
}

std::vector<double> SparseSpd::multiply(const std::vector<double>& x, const ExecPolicy& ex) const {
  std::vector<double> y(n);
  multiply(x.data(), y.data(), ex);
  return y;
}

std::vector<double> SparseSpd::diagonal() const {
  std::vector<double> d(n, 0.0);
  for (int r = 0; r < n; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      if (cols[k] == r) d[r] = vals[k];
  return d;
}

void SparseSpd::add_scaled_row(int k, double a, double* y) const {
  for (int p = row_ptr[k]; p < row_ptr[k + 1]; ++p) y[cols[p]] += a * vals[p];
}

StiffnessAssembler::StiffnessAssembler(const FineMesh& mesh) : mesh_(&mesh) {
  const int n = mesh.n_free_dofs;
  const double area = mesh.tri_area();

  for (int cls = 0; cls < 2; ++cls)
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c)
        for (int l = 0; l < 3; ++l)
          for (int d = 0; d < 2; ++d)
            ref_elem_[cls][(2 * k + c) * 6 + (2 * l + d)] =
                area * sym_grad_product(mesh.grads[cls], k, c, l, d);

  // Sparsity pattern from element connectivity.
  std::vector<std::vector<int>> rows(n);
  for (const auto& tri : mesh.triangles) {
    int dofs[6];
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) dofs[2 * k + c] = mesh.free_dof_of[2 * tri[k] + c];
    for (int a = 0; a < 6; ++a) {
      if (dofs[a] < 0) continue;
      for (int b = 0; b < 6; ++b)
        if (dofs[b] >= 0) rows[dofs[a]].push_back(dofs[b]);
    }
  }
  pattern_.n = n;
  pattern_.row_ptr.assign(n + 1, 0);
  for (int r = 0; r < n; ++r) {
    auto& cs = rows[r];
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    pattern_.row_ptr[r + 1] = pattern_.row_ptr[r] + static_cast<int>(cs.size());
  }
  pattern_.cols.reserve(pattern_.row_ptr[n]);
  for (int r = 0; r < n; ++r)
    pattern_.cols.insert(pattern_.cols.end(), rows[r].begin(), rows[r].end());

  auto slot = [&](int r, int c) {
    int lo = pattern_.row_ptr[r], hi = pattern_.row_ptr[r + 1];
    auto it = std::lower_bound(pattern_.cols.begin() + lo, pattern_.cols.begin() + hi, c);
    return static_cast<int>(it - pattern_.cols.begin());
  };

  scatter_.resize(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    int dofs[6];
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) dofs[2 * k + c] = mesh.free_dof_of[2 * tri[k] + c];
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b)
        scatter_[t][a * 6 + b] = (dofs[a] >= 0 && dofs[b] >= 0) ? slot(dofs[a], dofs[b]) : -1;
  }

  // 2x2 cell coloring: cells of one color share no nodes, so their triangles
  // scatter to disjoint entries and can run in parallel without atomics.
  for (int cell = 0; cell < mesh.nx * mesh.ny; ++cell) {
    int i = cell % mesh.nx, j = cell / mesh.nx;
    colors_[(i & 1) + 2 * (j & 1)].push_back(cell);
  }
}

SparseSpd StiffnessAssembler::assemble(const std::vector<double>& kappa,
                                       const ExecPolicy& ex) const {
  SparseSpd A = pattern_;
  A.vals.assign(A.cols.size(), 0.0);

  auto add_element = [&](int t) {
    const double kt = kappa[t];
    const auto& ref = ref_elem_[mesh_->tri_class(t)];
    const auto& sc = scatter_[t];
    for (int p = 0; p < 36; ++p)
      if (sc[p] >= 0) A.vals[sc[p]] += kt * ref[p];
  };

  if (ex.deterministic) {
    for (int t = 0; t < mesh_->n_triangles(); ++t) add_element(t);
  } else {
    for (const auto& color : colors_) {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(color.size()); ++k) {
        add_element(2 * color[k]);
        add_element(2 * color[k] + 1);
      }
    }
  }
  return A;
}

SparseSpd assemble_stiffness(const FineMesh& mesh, const BetaField& beta,
                             const DisplacementField& u_prev, double clamp_eps,
                             ClampCounter* clamps, const ExecPolicy& ex) {
  StiffnessAssembler assembler(mesh);
  return assembler.assemble(kappa_field(mesh, beta, u_prev, clamp_eps, clamps, ex), ex);
}

std::vector<double> assemble_load_full(const FineMesh& mesh, const SourceFn& f,
                                       const ExecPolicy& ex) {
  const int nt = mesh.n_triangles();
  const double w = mesh.tri_area() / 3.0;

  // Edge-midpoint rule: P1 shape values at the midpoints opposite vertex k
  // are 0 at midpoint k and 1/2 at the other two.
  std::vector<std::array<double, 6>> contrib(nt);  // per element: 3 vertices x 2 components
  auto eval_element = [&](int t) {
    const auto& tri = mesh.triangles[t];
    std::array<double, 2> fm[3];
    for (int e = 0; e < 3; ++e) {
      const auto& p = mesh.nodes[tri[(e + 1) % 3]];
      const auto& q = mesh.nodes[tri[(e + 2) % 3]];
      fm[e] = f(0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]));
    }
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c)
        contrib[t][2 * k + c] = w * 0.5 * (fm[(k + 1) % 3][c] + fm[(k + 2) % 3][c]);
  };

  if (ex.deterministic) {
    for (int t = 0; t < nt; ++t) eval_element(t);
  } else {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < nt; ++t) eval_element(t);
  }

  std::vector<double> b(static_cast<std::size_t>(2) * mesh.n_nodes(), 0.0);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) b[2 * tri[k] + c] += contrib[t][2 * k + c];
  }
  return b;
}

std::vector<double> assemble_load(const FineMesh& mesh, const SourceFn& f, const ExecPolicy& ex) {
  return restrict_to_free(mesh, assemble_load_full(mesh, f, ex));
}

std::vector<double> restrict_to_free(const FineMesh& mesh, const DisplacementField& u) {
  std::vector<double> x(mesh.n_free_dofs);
  for (int d = 0; d < mesh.n_free_dofs; ++d) x[d] = u[mesh.dof_of_free[d]];
  return x;
}

DisplacementField expand_from_free(const FineMesh& mesh, const std::vector<double>& x) {
  DisplacementField u(static_cast<std::size_t>(2) * mesh.n_nodes(), 0.0);
  for (int d = 0; d < mesh.n_free_dofs; ++d) u[mesh.dof_of_free[d]] = x[d];
  return u;
}

namespace {

// Map local dofs (2*local_node+c) to positions in nb.free_dofs.
std::vector<int> free_position_map(const Neighborhood& nb) {
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (std::size_t p = 0; p < nb.free_dofs.size(); ++p) pos[nb.free_dofs[p]] = static_cast<int>(p);
  return pos;
}

} // namespace

Eigen::MatrixXd local_stiffness(const FineMesh& mesh, const Neighborhood& nb,
                                const std::vector<double>& kappa) {
  const int n = static_cast<int>(nb.free_dofs.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  auto pos = free_position_map(nb);
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
            if (pb >= 0) A(pa, pb) += kt * sym_grad_product(g, k, c, l, d);
          }
      }
  }
  return A;
}

Eigen::MatrixXd local_stiffness_subset(const FineMesh& mesh, const Neighborhood& nb,
                                       const std::vector<double>& kappa,
                                       const std::vector<int>& local_dofs) {
  const int n = static_cast<int>(local_dofs.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (int p = 0; p < n; ++p) pos[local_dofs[p]] = p;
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
            if (pb >= 0) A(pa, pb) += kt * sym_grad_product(g, k, c, l, d);
          }
      }
  }
  return A;
}

int local_bandwidth(const FineMesh& mesh, const Neighborhood& nb) {
  std::vector<int> pos(2 * nb.fine_nodes.size(), -1);
  for (std::size_t p = 0; p < nb.free_dofs.size(); ++p) pos[nb.free_dofs[p]] = static_cast<int>(p);
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

Eigen::MatrixXd assemble_weighted_mass(const FineMesh& mesh, const Neighborhood& nb,
                                       const std::vector<double>& kappa,
                                       const std::vector<double>& pou_gradients) {
  const int n = static_cast<int>(nb.free_dofs.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  auto pos = free_position_map(nb);
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
          if (pa >= 0 && pb >= 0) M(pa, pb) += m;
        }
      }
  }
  return M;
}

Eigen::VectorXd local_load(const FineMesh& mesh, const Neighborhood& nb, const SourceFn& f) {
  const int n = static_cast<int>(nb.free_dofs.size());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  auto pos = free_position_map(nb);
  const double w = mesh.tri_area() / 3.0;

  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    std::array<double, 2> fm[3];
    for (int e = 0; e < 3; ++e) {
      const auto& p = mesh.nodes[tri[(e + 1) % 3]];
      const auto& q = mesh.nodes[tri[(e + 2) % 3]];
      fm[e] = f(0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]));
    }
    for (int k = 0; k < 3; ++k) {
      int loc = nb.local_node_of(tri[k]);
      for (int c = 0; c < 2; ++c) {
        int pa = pos[2 * loc + c];
        if (pa >= 0) b(pa) += w * 0.5 * (fm[(k + 1) % 3][c] + fm[(k + 2) % 3][c]);
      }
    }
  }
  return b;
}

Eigen::VectorXd local_residual(const FineMesh& mesh, const Neighborhood& nb,
                               const std::vector<double>& kappa, const DisplacementField& u_ms,
                               const Eigen::VectorXd& patch_load) {
  Eigen::VectorXd r = patch_load;
  auto pos = free_position_map(nb);
  const double area = mesh.tri_area();

  for (int t : nb.triangles) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.grads[mesh.tri_class(t)];
    const double kt = kappa[t] * area;
    StrainTensor E = element_strain(mesh, u_ms, t);
    for (int k = 0; k < 3; ++k) {
      int loc = nb.local_node_of(tri[k]);
      for (int c = 0; c < 2; ++c) {
        int pa = pos[2 * loc + c];
        if (pa < 0) continue;
        // D(u_ms) : D(phi_(k,c))
        double prod = c == 0 ? E.e11 * g[k][0] + E.e12 * g[k][1]
                             : E.e22 * g[k][1] + E.e12 * g[k][0];
        r(pa) -= kt * prod;
      }
    }
  }
  return r;
}

Eigen::VectorXd local_residual(const FineMesh& mesh, const Neighborhood& nb,
                               const BetaField& beta, const DisplacementField& u_prev,
                               const DisplacementField& u_ms, const SourceFn& f,
                               double clamp_eps) {
  auto kappa = kappa_field(mesh, beta, u_prev, clamp_eps);
  return local_residual(mesh, nb, kappa, u_ms, local_load(mesh, nb, f));
}

double energy_product(const FineMesh& mesh, const std::vector<double>& kappa,
                      const DisplacementField& u, const DisplacementField& v,
                      const ExecPolicy& ex) {
  const int nt = mesh.n_triangles();
  const double area = mesh.tri_area();
  double s = 0.0;
  if (ex.deterministic) {
    for (int t = 0; t < nt; ++t) {
      StrainTensor Eu = element_strain(mesh, u, t);
      StrainTensor Ev = element_strain(mesh, v, t);
      s += kappa[t] * area *
           (Eu.e11 * Ev.e11 + Eu.e22 * Ev.e22 + 2.0 * Eu.e12 * Ev.e12);
    }
  } else {
#pragma omp parallel for reduction(+ : s) schedule(static)
    for (int t = 0; t < nt; ++t) {
      StrainTensor Eu = element_strain(mesh, u, t);
      StrainTensor Ev = element_strain(mesh, v, t);
      s += kappa[t] * area *
           (Eu.e11 * Ev.e11 + Eu.e22 * Ev.e22 + 2.0 * Eu.e12 * Ev.e12);
    }
  }
  return s;
}

} // namespace slfem
