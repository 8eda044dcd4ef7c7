#pragma once

// Sparse SPD solves (Jacobi-preconditioned CG) and dense symmetric
// generalized eigenproblems for the local spectral constructions.

#include <Eigen/Dense>
#include <vector>

#include "slfem/fem.hpp"
#include "slfem/kernels.hpp"

namespace slfem {

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double rel_residual = 0;
  bool converged = false;
};

// Solves A x = b to ||Ax-b|| <= tol*||b||. Optional warm start x0; optional
// per-iteration quadratic objective trace (0.5 x'Ax - b'x, non-increasing in
// exact arithmetic).
CgResult spd_solve(const SparseSpd& A, const std::vector<double>& b, double tol = 1e-10,
                   int max_iter = 20000, const std::vector<double>* x0 = nullptr,
                   const ExecPolicy& ex = {}, std::vector<double>* objective_trace = nullptr);

struct EigenPair {
  double lambda = 0;
  Eigen::VectorXd vector;
};

// Symmetric matrix in LAPACK lower band storage (col-major, ldab = kd+1).
// The local patch operators are banded in the row-major dof ordering, which
// keeps factorizations and matvecs at O(n*kd) instead of O(n^2).
struct SymBand {
  int n = 0, kd = 0;
  std::vector<double> ab;

  void resize(int n_, int kd_);
  // i >= j and i - j <= kd
  double& at(int i, int j) { return ab[static_cast<std::size_t>(j) * (kd + 1) + (i - j)]; }
  double at(int i, int j) const { return ab[static_cast<std::size_t>(j) * (kd + 1) + (i - j)]; }
  Eigen::MatrixXd to_dense() const;
  void multiply(const Eigen::MatrixXd& X, Eigen::MatrixXd& Y) const;  // Y = A X
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  double inf_norm() const;
  double trace() const;
};

// k smallest eigenpairs of A x = lambda M x, ascending; vectors M-orthonormal.
// A symmetric PSD, M SPD; throws if M fails its Cholesky factorization.
std::vector<EigenPair> generalized_eigh(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M, int k);

// Same problem, solved by shift-invert subspace iteration with a banded
// Cholesky of A + sigma*M (half-bandwidth kd) when a warm-start block from a
// nearby problem is supplied. Falls back to the dense route when warm is
// empty/mismatched or the iteration misses its residual gate; the accepted
// block is written back to *warm. Results satisfy the same postconditions as
// generalized_eigh (residual <= 1e-9 * ||A||_inf enforced internally).
std::vector<EigenPair> generalized_eigh_warm(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M,
                                             int k, int kd, Eigen::MatrixXd* warm);

// Banded generalized eigensolver with optional exact deflation: the columns
// of *deflate must be M-orthonormal exact null vectors of A (they are
// returned verbatim as the leading eigenpairs, eigenvalue 0) and the
// remaining pairs are found by warm-started shift-invert subspace iteration
// in their M-orthogonal complement. Dense fallback as in generalized_eigh_warm.
std::vector<EigenPair> generalized_eigh_band(const SymBand& A, const SymBand& M, int k,
                                             const Eigen::MatrixXd* deflate, Eigen::MatrixXd* warm,
                                             bool force_dense = false);

// Cumulative counters for the eigensolver routes (performance diagnostics).
struct EigStats {
  long warm_calls = 0;
  long warm_sweeps = 0;
  long dense_calls = 0;
};
EigStats eig_stats();
void reset_eig_stats();

// Dense SPD solve (LDLT), used for coarse systems and small local problems.
Eigen::VectorXd dense_spd_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);
Eigen::MatrixXd dense_spd_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Dense SPD solve via LAPACK Cholesky; throws if A is not positive definite.
Eigen::VectorXd cholesky_spd_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

// All eigenvalues of a dense symmetric matrix, ascending (values only).
Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& A);

} // namespace slfem
