#pragma once

// GMsFEM machinery: partition of unity, offline spectral bases from local
// generalized eigenproblems, residual-driven online bases, the adaptive
// enrichment loop, and the Picard driver with the kappa-change basis-update
// indicator.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "slfem/coefficient.hpp"
#include "slfem/fem.hpp"
#include "slfem/fine_solver.hpp"
#include "slfem/grid.hpp"
#include "slfem/linalg.hpp"

namespace slfem {

enum class PouMode { Hat, Msfem };

// Scalar field chi_i over the closed patch of one coarse node; nodes sorted
// ascending, zero on the patch boundary and outside.
struct PouFunction {
  std::vector<int> nodes;
  std::vector<double> values;

  double value_at(int fine_node) const;
};

struct PartitionOfUnity {
  PouMode mode = PouMode::Hat;
  std::vector<PouFunction> chi;      // one per coarse node, boundary ones included
  std::vector<double> grad_weight;   // per fine triangle: sum_i H^2 |grad chi_i|^2
};                                   // (sum over interior coarse nodes)

// Hat mode ignores kappa; msfem mode harmonically extends the hat boundary
// data cell by cell with the current kappa.
PartitionOfUnity build_pou(const FineMesh& mesh, const CoarseGrid& grid,
                           const std::vector<double>& kappa, PouMode mode,
                           const ExecPolicy& ex = {});

enum class BasisKind { Offline, Online };

// 2-vector fine-nodal field supported on the closed patch of coarse_node.
struct LocalBasis {
  int coarse_node = -1;
  int ci = -1, cj = -1;  // coarse grid coordinates of the owner node
  BasisKind kind = BasisKind::Offline;
  std::vector<int> nodes;      // = neighborhood fine_nodes
  std::vector<double> values;  // 2 per node
  double lambda = 0;           // offline: its eigenvalue
  double energy_norm = 0;      // online: r_i at creation
};

struct OfflineBasisResult {
  std::vector<LocalBasis> bases;     // count functions
  std::vector<double> eigenvalues;   // count + 1 values, ascending
};

struct EigOptions {
  // Warm-started subspace iteration with dense fallback; Dense forces LAPACK
  // dsygvx unconditionally.
  enum class Method { Auto, Dense } method = Method::Auto;
};

// Local operators in band storage over an explicit local dof subset.
SymBand local_stiffness_band(const FineMesh& mesh, const Neighborhood& nb,
                             const std::vector<double>& kappa, const std::vector<int>& local_dofs);
SymBand weighted_mass_band(const FineMesh& mesh, const Neighborhood& nb,
                           const std::vector<double>& kappa,
                           const std::vector<double>& pou_gradients,
                           const std::vector<int>& local_dofs);

// All local dofs of the patch (the snapshot set of the spectral problems;
// conformity of the offline bases comes from the chi factor, which vanishes
// on the patch boundary and on the domain boundary).
std::vector<int> snapshot_dofs(const Neighborhood& nb);

// M-orthonormalized rigid motions of the patch (diagonal translation,
// antidiagonal translation, centered rotation): the exact nullspace of the
// free local stiffness, used to deflate the spectral problem and to give the
// degenerate bottom cluster a deterministic orientation.
Eigen::MatrixXd rigid_block(const FineMesh& mesh, const Neighborhood& nb, const SymBand& M,
                            const std::vector<int>& local_dofs);

// Offline bases for one neighborhood: identity snapshots, generalized
// spectral problem (local stiffness vs kappa-tilde mass), first `count`
// eigenvectors multiplied nodewise by chi_i. Also returns lambda_{count+1}.
// warm, when given, carries the previous eigenvector block for this
// neighborhood and is updated in place.
OfflineBasisResult offline_basis(const FineMesh& mesh, const Neighborhood& nb,
                                 const std::vector<double>& kappa, const PartitionOfUnity& pou,
                                 int count, const EigOptions& eig = {},
                                 Eigen::MatrixXd* warm = nullptr);

struct SpaceColumn {
  int coarse_node = -1;
  int ci = -1, cj = -1;
  BasisKind kind = BasisKind::Offline;
  std::vector<int> dofs;     // global free dofs, ascending
  std::vector<double> vals;  // unit energy norm
};

struct MultiscaleSpace {
  std::vector<SpaceColumn> columns;
  int generation = 0;  // increments at each rebuild

  int dim() const { return static_cast<int>(columns.size()); }
  // Full fine space as an explicit identity prolongation (testing).
  static MultiscaleSpace identity(int n_free_dofs);
};

// Stacks the bases as prolongation columns (normalized to unit energy norm
// in A) and verifies linear independence of the normalized Gram matrix.
// check_rank controls the O(dim^3) smallest-eigenvalue screen.
MultiscaleSpace assemble_space(const std::vector<LocalBasis>& bases, const FineMesh& mesh,
                               const SparseSpd& A, bool check_rank = true);

// Appends one basis as a normalized column (enrichment; keeps existing
// columns untouched).
void append_basis(MultiscaleSpace& space, const LocalBasis& basis, const FineMesh& mesh,
                  const SparseSpd& A);

struct CoarseSolveResult {
  DisplacementField u;       // full node set, zero on the domain boundary
  Eigen::VectorXd coeffs;
  double galerkin_residual = 0;  // ||P'(b - A u)|| / ||b||
};

CoarseSolveResult coarse_solve(const MultiscaleSpace& space, const SparseSpd& A,
                               const std::vector<double>& b, const FineMesh& mesh,
                               const ExecPolicy& ex = {});

struct OnlineCandidate {
  LocalBasis basis;  // kind Online, energy_norm = r_i
  double r = 0;
};

// Banded Cholesky of the interior-dof stiffness of one patch, reused by the
// online solves across enrichment sweeps within one linearization.
class OnlineLocalSolver {
public:
  OnlineLocalSolver() = default;
  OnlineLocalSolver(const FineMesh& mesh, const Neighborhood& nb, const std::vector<double>& kappa);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  bool ready() const { return n_ > 0; }

private:
  int n_ = 0, kd_ = 0;
  std::vector<double> factor_;  // dpbtrf output
};

// Riesz representative of the patch residual in V_i = H^1_0(patch):
// solves the interior-dof system a_n(phi, v) = R_i(v).
OnlineCandidate online_basis(const FineMesh& mesh, const Neighborhood& nb,
                             const std::vector<double>& kappa, const DisplacementField& u_ms,
                             const Eigen::VectorXd& patch_load);
// Same, with a prefactored interior solver.
OnlineCandidate online_basis(const FineMesh& mesh, const Neighborhood& nb,
                             const std::vector<double>& kappa, const DisplacementField& u_ms,
                             const Eigen::VectorXd& patch_load, const OnlineLocalSolver& solver);

struct EnrichStep {
  int k_p = 0;
  double sum_r2 = 0;
  double lambda_min_selected = 0;  // min over selected nodes of lambda_{l_i+1} (diagnostic)
};

// Sorts candidates by descending r (ties by ascending node index), picks the
// smallest prefix with theta * sum r^2 <= prefix sum, appends those bases.
EnrichStep online_enrich_step(MultiscaleSpace& space, const FineMesh& mesh, const SparseSpd& A,
                              double theta, std::vector<OnlineCandidate>& candidates,
                              const std::vector<double>* lambda_next = nullptr);

inline constexpr double kDeltaInf = std::numeric_limits<double>::infinity();

struct UpdatePolicy {
  double delta = kDeltaInf;  // kappa-change tolerance; inf = never rebuild, 0 = every iteration
  double theta = 1.0;        // enrichment fraction in (0, 1]
  double online_tol = 0.0;   // stop enriching when sum r_i^2 <= online_tol
  int nb_off = 3;            // offline bases per coarse node
  int nb_on = 0;             // online enrichment iterations per basis build
  double dim_cap_fraction = 0.2;  // space dimension cap, relative to fine free dofs
  PouMode pou = PouMode::Msfem;
  EigOptions eig;
  bool check_rank = true;
};

struct OnlineIterationRecord {
  double sum_r2 = 0;
  int added = 0;
  int dim_after = 0;
  double lambda_min_selected = 0;
};

struct GmsIterationRecord {
  double change = 0;
  double kappa_indicator = 0;
  bool rebuilt = false;
  int space_dim = 0;
  int online_iterations = 0;
  double sum_r2 = 0;
  std::int64_t clamps = 0;
  int cg_like_dim = 0;  // coarse system size solved this iteration
};

struct GmsfemReport {
  std::vector<GmsIterationRecord> iterations;
  std::vector<OnlineIterationRecord> online_log;
  bool converged = false;
  int basis_builds = 0;
  int online_bases_total = 0;
  std::int64_t final_clamps = 0;
  double wall_offline_ms = 0, wall_online_ms = 0, wall_coarse_ms = 0, wall_total_ms = 0;

  int count() const { return static_cast<int>(iterations.size()); }
};

struct GmsfemResult {
  DisplacementField u;
  GmsfemReport report;
  MultiscaleSpace space;
};

// Relative L2 change of the piecewise-constant coefficient (area-weighted).
double kappa_change_indicator(const FineMesh& mesh, const std::vector<double>& kappa_old,
                              const std::vector<double>& kappa_new);

// Full GMsFEM-Picard driver. initial_space, when given, bypasses the basis
// construction entirely (testing; combine with delta = inf).
GmsfemResult gmsfem_picard(const FineMesh& mesh, const CoarseGrid& grid, const BetaField& beta,
                           const SourceFn& f, const UpdatePolicy& policy,
                           const PicardOptions& picard = {},
                           const MultiscaleSpace* initial_space = nullptr);

// Online adaptive loop within one fixed linearization (exposed for tests and
// reuse by the driver): coarse solve, candidate solves, theta-selection,
// repeat up to max_iterations.
struct OnlineSolveResult {
  DisplacementField u;
  std::vector<OnlineIterationRecord> log;
};
OnlineSolveResult online_adaptive_solve(MultiscaleSpace& space, const FineMesh& mesh,
                                        const CoarseGrid& grid,
                                        const std::vector<Neighborhood>& neighborhoods,
                                        const SparseSpd& A, const std::vector<double>& b,
                                        const std::vector<double>& kappa,
                                        const std::vector<Eigen::VectorXd>& patch_loads,
                                        const UpdatePolicy& policy, int max_iterations,
                                        const std::vector<double>* lambda_next = nullptr,
                                        const ExecPolicy& ex = {});

} // namespace slfem
