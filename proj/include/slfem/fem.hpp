#pragma once

// Vector P1 assembly on the fine grid: kappa-weighted stiffness in the
// symmetric-gradient form, load functionals, the weighted local mass used by
// the spectral problems, and patch-restricted residuals.
//
// Global operators live on free dofs (Dirichlet rows/columns eliminated);
// all element integrands are piecewise constant, so stiffness and mass
// integration is exact. Loads use the 3-point edge-midpoint rule.

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

#include "slfem/coefficient.hpp"
#include "slfem/grid.hpp"
#include "slfem/kernels.hpp"

namespace slfem {

using SourceFn = std::function<std::array<double, 2>(double, double)>;

// Symmetric sparse matrix in CSR over free dofs.
struct SparseSpd {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> cols;
  std::vector<double> vals;

  // y = A x; row-parallel, deterministic in both modes.
  void multiply(const double* x, double* y, const ExecPolicy& ex = {}) const;
  std::vector<double> multiply(const std::vector<double>& x, const ExecPolicy& ex = {}) const;
  std::vector<double> diagonal() const;
  // Adds row k of A scaled by a into dense y (y += a * A(:,k) by symmetry).
  void add_scaled_row(int k, double a, double* y) const;
};

// Precomputes the CSR pattern, element scatter maps and the two reference
// element matrices; assemble() then only scales and scatters per-element.
class StiffnessAssembler {
public:
  explicit StiffnessAssembler(const FineMesh& mesh);

  // kappa: one weight per triangle.
  SparseSpd assemble(const std::vector<double>& kappa, const ExecPolicy& ex = {}) const;

  const FineMesh& mesh() const { return *mesh_; }

private:
  const FineMesh* mesh_;
  SparseSpd pattern_;                       // vals unset
  std::vector<std::array<int, 36>> scatter_;  // per element: CSR value slot or -1
  std::array<std::array<double, 36>, 2> ref_elem_{};  // area-scaled, per class
  std::array<std::vector<int>, 4> colors_;  // 2x2 cell coloring for parallel scatter

  friend class LocalAssembler;
};

// One-shot convenience around StiffnessAssembler + kappa_field.
SparseSpd assemble_stiffness(const FineMesh& mesh, const BetaField& beta,
                             const DisplacementField& u_prev, double clamp_eps,
                             ClampCounter* clamps = nullptr, const ExecPolicy& ex = {});

// Load vector over all 2*n_nodes dofs (no elimination).
std::vector<double> assemble_load_full(const FineMesh& mesh, const SourceFn& f,
                                       const ExecPolicy& ex = {});
// Load vector over free dofs.
std::vector<double> assemble_load(const FineMesh& mesh, const SourceFn& f,
                                  const ExecPolicy& ex = {});

std::vector<double> restrict_to_free(const FineMesh& mesh, const DisplacementField& u);
DisplacementField expand_from_free(const FineMesh& mesh, const std::vector<double>& x);

// ---- local (patch) operators, dense over nb.free_dofs ----

// kappa-weighted stiffness restricted to the patch triangles.
Eigen::MatrixXd local_stiffness(const FineMesh& mesh, const Neighborhood& nb,
                                const std::vector<double>& kappa);

// Same, restricted to an arbitrary subset of local dofs (e.g. the interior
// dofs for the online solves).
Eigen::MatrixXd local_stiffness_subset(const FineMesh& mesh, const Neighborhood& nb,
                                       const std::vector<double>& kappa,
                                       const std::vector<int>& local_dofs);

// Exact half-bandwidth of the local operators in the free-dof ordering.
int local_bandwidth(const FineMesh& mesh, const Neighborhood& nb);

// Frobenius product of the symmetric gradients of the P1 basis functions
// (vertex k, component c) and (vertex l, component d) for shape gradients g.
inline double sym_grad_product(const std::array<std::array<double, 2>, 3>& g, int k, int c, int l,
                               int d) {
  if (c == 0 && d == 0) return g[k][0] * g[l][0] + 0.5 * g[k][1] * g[l][1];
  if (c == 1 && d == 1) return g[k][1] * g[l][1] + 0.5 * g[k][0] * g[l][0];
  if (c == 0 && d == 1) return 0.5 * g[k][1] * g[l][0];
  return 0.5 * g[k][0] * g[l][1];  // c == 1, d == 0
}

// Vector P1 mass weighted by kappa_tilde_t = kappa_t * pou_gradients_t.
Eigen::MatrixXd assemble_weighted_mass(const FineMesh& mesh, const Neighborhood& nb,
                                       const std::vector<double>& kappa,
                                       const std::vector<double>& pou_gradients);

// J(phi_p) restricted to the patch, over nb.free_dofs.
Eigen::VectorXd local_load(const FineMesh& mesh, const Neighborhood& nb, const SourceFn& f);

// R_i(phi_p) = J(phi_p)|_patch - a_n(u_ms, phi_p)|_patch over nb.free_dofs.
Eigen::VectorXd local_residual(const FineMesh& mesh, const Neighborhood& nb,
                               const std::vector<double>& kappa, const DisplacementField& u_ms,
                               const Eigen::VectorXd& patch_load);
// Spec-shaped wrapper computing kappa and the patch load internally.
Eigen::VectorXd local_residual(const FineMesh& mesh, const Neighborhood& nb,
                               const BetaField& beta, const DisplacementField& u_prev,
                               const DisplacementField& u_ms, const SourceFn& f,
                               double clamp_eps);

// a_n(u, v) evaluated elementwise over the whole mesh (exact).
double energy_product(const FineMesh& mesh, const std::vector<double>& kappa,
                      const DisplacementField& u, const DisplacementField& v,
                      const ExecPolicy& ex = {});

} // namespace slfem
