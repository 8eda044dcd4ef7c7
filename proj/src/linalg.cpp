#include "slfem/linalg.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>

extern "C" void openblas_set_num_threads(int);

namespace slfem {

namespace {

// Outer loops parallelize across neighborhoods; keep BLAS serial underneath.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

} // namespace

CgResult spd_solve(const SparseSpd& A, const std::vector<double>& b, double tol, int max_iter,
                   const std::vector<double>* x0, const ExecPolicy& ex,
                   std::vector<double>* objective_trace) {
  const std::size_t n = static_cast<std::size_t>(A.n);
  CgResult res;
  res.x.assign(n, 0.0);

  const double bnorm = kernels::norm2(b, ex);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<double> r(n), z(n), p(n), q(n);
  if (x0) {
    res.x = *x0;
    A.multiply(res.x.data(), q.data(), ex);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  } else {
    r = b;
  }

  std::vector<double> inv_diag = A.diagonal();
  for (auto& d : inv_diag) d = 1.0 / d;

  auto precondition = [&](const std::vector<double>& src, std::vector<double>& dst) {
    if (ex.deterministic) {
      for (std::size_t i = 0; i < n; ++i) dst[i] = inv_diag[i] * src[i];
    } else {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        dst[i] = inv_diag[i] * src[i];
    }
  };

  auto record_objective = [&] {
    if (!objective_trace) return;
    // f(x) = 0.5 x'Ax - b'x = -0.5 x'(b + r)  with r = b - Ax
    double xb = kernels::dot(res.x, b, ex);
    double xr = kernels::dot(res.x, r, ex);
    objective_trace->push_back(-0.5 * (xb + xr));
  };

  double rnorm = kernels::norm2(r, ex);
  res.rel_residual = rnorm / bnorm;
  record_objective();
  if (res.rel_residual <= tol) {
    res.converged = true;
    return res;
  }

  precondition(r, z);
  p = z;
  double rz = kernels::dot(r, z, ex);

  for (int it = 0; it < max_iter; ++it) {
    A.multiply(p.data(), q.data(), ex);
    double pq = kernels::dot(p, q, ex);
    if (!(pq > 0.0)) break;  // loss of positive definiteness
    double alpha = rz / pq;
    kernels::axpy(alpha, p.data(), res.x.data(), n, ex);
    kernels::axpy(-alpha, q.data(), r.data(), n, ex);
    res.iterations = it + 1;

    record_objective();
    rnorm = kernels::norm2(r, ex);
    res.rel_residual = rnorm / bnorm;
    if (res.rel_residual <= tol) {
      res.converged = true;
      return res;
    }

    precondition(r, z);
    double rz_new = kernels::dot(r, z, ex);
    kernels::xpay(z.data(), rz_new / rz, p.data(), n, ex);
    rz = rz_new;
  }
  return res;
}

std::vector<EigenPair> generalized_eigh(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M,
                                        int k) {
  pin_blas_threads();
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || M.rows() != n || M.cols() != n)
    throw std::invalid_argument("generalized_eigh: dimension mismatch");
  if (k < 1 || k > n)
    throw std::invalid_argument("generalized_eigh: k = " + std::to_string(k) +
                                " out of range for dimension " + std::to_string(n));

  Eigen::MatrixXd Ac = A, Mc = M;
  std::vector<double> w(n);
  Eigen::MatrixXd Z(n, k);
  std::vector<lapack_int> ifail(n);
  lapack_int found = 0;
  lapack_int info = LAPACKE_dsygvx(LAPACK_COL_MAJOR, 1, 'V', 'I', 'L', n, Ac.data(), n, Mc.data(),
                                   n, 0.0, 0.0, 1, k, 2 * LAPACKE_dlamch('S'), &found, w.data(),
                                   Z.data(), n, ifail.data());
  if (info > n)
    throw std::runtime_error("generalized_eigh: M is not positive definite (Cholesky failed at "
                             "leading minor " +
                             std::to_string(info - n) + ")");
  if (info != 0)
    throw std::runtime_error("generalized_eigh: LAPACK dsygvx failed, info = " +
                             std::to_string(info));
  if (found < k)
    throw std::runtime_error("generalized_eigh: only " + std::to_string(found) + " of " +
                             std::to_string(k) + " eigenpairs converged");

  std::vector<EigenPair> pairs(k);
  for (int j = 0; j < k; ++j) {
    pairs[j].lambda = w[j];
    pairs[j].vector = Z.col(j);
  }
  return pairs;
}

void SymBand::resize(int n_, int kd_) {
  n = n_;
  kd = kd_;
  ab.assign(static_cast<std::size_t>(kd + 1) * n, 0.0);
}

Eigen::MatrixXd SymBand::to_dense() const {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = j; i <= std::min(n - 1, j + kd); ++i) {
      D(i, j) = at(i, j);
      D(j, i) = at(i, j);
    }
  return D;
}

void SymBand::multiply(const Eigen::MatrixXd& X, Eigen::MatrixXd& Y) const {
  Y.resize(n, X.cols());
  for (int c = 0; c < X.cols(); ++c)
    cblas_dsbmv(CblasColMajor, CblasLower, n, kd, 1.0, ab.data(), kd + 1, X.col(c).data(), 1,
                0.0, Y.col(c).data(), 1);
}

Eigen::VectorXd SymBand::multiply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(n);
  cblas_dsbmv(CblasColMajor, CblasLower, n, kd, 1.0, ab.data(), kd + 1, x.data(), 1, 0.0,
              y.data(), 1);
  return y;
}

double SymBand::inf_norm() const {
  std::vector<double> row_sum(n, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = j; i <= std::min(n - 1, j + kd); ++i) {
      double v = std::abs(at(i, j));
      row_sum[i] += v;
      if (i != j) row_sum[j] += v;
    }
  return *std::max_element(row_sum.begin(), row_sum.end());
}

double SymBand::trace() const {
  double t = 0;
  for (int j = 0; j < n; ++j) t += at(j, j);
  return t;
}

namespace {

std::atomic<long> g_warm_calls{0}, g_warm_sweeps{0}, g_dense_calls{0};

SymBand band_from_dense(const Eigen::MatrixXd& A, int kd) {
  SymBand B;
  B.resize(static_cast<int>(A.rows()), kd);
  for (int j = 0; j < B.n; ++j)
    for (int i = j; i <= std::min(B.n - 1, j + kd); ++i) B.at(i, j) = A(i, j);
  return B;
}

// Dense route shared by the fallbacks: computes `want` pairs, substitutes the
// deflation block for the degenerate leading cluster, seeds the warm block
// with the non-deflated vectors.
std::vector<EigenPair> band_dense_path(const SymBand& A, const SymBand& M, int k,
                                       const Eigen::MatrixXd* deflate, Eigen::MatrixXd* warm) {
  g_dense_calls.fetch_add(1, std::memory_order_relaxed);
  const int n = A.n;
  const int d = deflate ? static_cast<int>(deflate->cols()) : 0;
  const int want = std::min(n, k + 6);

  Eigen::MatrixXd Ad = A.to_dense(), Md = M.to_dense();
  auto pairs = generalized_eigh(Ad, Md, want);

  if (d > 0) {
    const double scale = std::abs(Ad.trace() / Md.trace());
    if (pairs[std::min(d, want) - 1].lambda <= 1e-9 * scale)
      for (int j = 0; j < d && j < want; ++j) pairs[j].vector = deflate->col(j);
  }
  if (warm) {
    const int cols = want - d;
    if (cols > 0) {
      warm->resize(n, cols);
      for (int j = 0; j < cols; ++j) warm->col(j) = pairs[d + j].vector;
    } else {
      warm->resize(0, 0);
    }
  }
  pairs.resize(std::min(k, want));
  return pairs;
}

} // namespace

std::vector<EigenPair> generalized_eigh_band(const SymBand& A, const SymBand& M, int k,
                                             const Eigen::MatrixXd* deflate, Eigen::MatrixXd* warm,
                                             bool force_dense) {
  pin_blas_threads();
  const int n = A.n;
  if (k < 1 || k > n)
    throw std::invalid_argument("generalized_eigh_band: k out of range");

  const int d = deflate ? static_cast<int>(deflate->cols()) : 0;

  // Everything requested lies in the deflation space: exact answer, no solve.
  if (d >= k) {
    std::vector<EigenPair> pairs(k);
    for (int j = 0; j < k; ++j) {
      pairs[j].lambda = 0.0;
      pairs[j].vector = deflate->col(j);
    }
    return pairs;
  }

  const int q = k - d;                 // pairs to iterate for
  const int p = std::min(n - d, q + 6);  // active block size

  const bool have_warm = warm && warm->rows() == n && warm->cols() >= p;
  if (force_dense || !have_warm || n < 200 || p <= q)
    return band_dense_path(A, M, k, deflate, warm);
  g_warm_calls.fetch_add(1, std::memory_order_relaxed);

  const double a_scale = A.inf_norm();
  const double m_scale = M.inf_norm();
  const double sigma = 1e-6 * a_scale / m_scale;
  const double res_tol = 1e-9 * a_scale;
  const int kd = std::max(A.kd, M.kd);

  Eigen::MatrixXd MR;  // M times the deflation block
  if (d > 0) M.multiply(*deflate, MR);

  Eigen::MatrixXd X = warm->leftCols(p);
  Eigen::MatrixXd W, MW, AW, H, tmp;
  Eigen::VectorXd theta;
  std::vector<double> kb;  // banded Cholesky of K = A + sigma*M, built on demand
  bool factored = false;
  const int max_sweeps = 40;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    g_warm_sweeps.fetch_add(1, std::memory_order_relaxed);
    if (sweep == 0) {
      // Screen the warm block first: when the coefficient barely moved it
      // already passes the residual gate and the factorization is skipped.
      W = X;
    } else {
      if (!factored) {
        kb.assign(static_cast<std::size_t>(kd + 1) * n, 0.0);
        for (int j = 0; j < n; ++j)
          for (int i = j; i <= std::min(n - 1, j + kd); ++i) {
            double v = (i - j <= A.kd ? A.at(i, j) : 0.0) + sigma * (i - j <= M.kd ? M.at(i, j) : 0.0);
            kb[static_cast<std::size_t>(j) * (kd + 1) + (i - j)] = v;
          }
        if (LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', n, kd, kb.data(), kd + 1) != 0)
          return band_dense_path(A, M, k, deflate, warm);
        factored = true;
      }
      // Shift-invert step: W = K^{-1} M X.
      M.multiply(X, W);
      if (LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'L', n, kd, p, kb.data(), kd + 1, W.data(), n) != 0)
        return band_dense_path(A, M, k, deflate, warm);
    }

    M.multiply(W, MW);
    // Project out the deflation space (M-orthogonal complement).
    if (d > 0) {
      Eigen::MatrixXd C = deflate->transpose() * MW;
      W.noalias() -= *deflate * C;
      MW.noalias() -= MR * C;
    }

    // M-orthonormalize W.
    Eigen::MatrixXd S = W.transpose() * MW;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd Rinv = llt.matrixU().solve(Eigen::MatrixXd::Identity(p, p));
      tmp.noalias() = W * Rinv;
      W.swap(tmp);
      tmp.noalias() = MW * Rinv;
      MW.swap(tmp);
    } else {
      // Rank loss in the block: spectral square root with clamped directions.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
      Eigen::VectorXd dg = es.eigenvalues().cwiseMax(1e-14 * es.eigenvalues().maxCoeff());
      Eigen::MatrixXd T = es.eigenvectors() * dg.cwiseInverse().cwiseSqrt().asDiagonal();
      tmp.noalias() = W * T;
      W.swap(tmp);
      tmp.noalias() = MW * T;
      MW.swap(tmp);
    }

    // Rayleigh-Ritz in the M-orthonormal block.
    A.multiply(W, AW);
    H.noalias() = W.transpose() * AW;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    if (es.info() != Eigen::Success) return band_dense_path(A, M, k, deflate, warm);
    theta = es.eigenvalues();
    X.noalias() = W * es.eigenvectors();

    Eigen::MatrixXd AX = AW * es.eigenvectors().leftCols(q);
    Eigen::MatrixXd MX = MW * es.eigenvectors().leftCols(q);
    bool done = true;
    for (int j = 0; j < q; ++j)
      if ((AX.col(j) - theta(j) * MX.col(j)).norm() > res_tol) {
        done = false;
        break;
      }
    if (done) {
      *warm = X;
      std::vector<EigenPair> pairs(k);
      for (int j = 0; j < d; ++j) {
        pairs[j].lambda = 0.0;
        pairs[j].vector = deflate->col(j);
      }
      for (int j = 0; j < q; ++j) {
        pairs[d + j].lambda = theta(j);
        pairs[d + j].vector = X.col(j);
      }
      return pairs;
    }
  }
  // Residual gate missed; recompute densely.
  return band_dense_path(A, M, k, deflate, warm);
}

std::vector<EigenPair> generalized_eigh_warm(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M,
                                             int k, int kd, Eigen::MatrixXd* warm) {
  return generalized_eigh_band(band_from_dense(A, kd), band_from_dense(M, kd), k, nullptr, warm);
}

Eigen::VectorXd dense_spd_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("dense_spd_solve: LDLT factorization failed");
  return ldlt.solve(b);
}

Eigen::MatrixXd dense_spd_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("dense_spd_solve: LDLT factorization failed");
  return ldlt.solve(B);
}

EigStats eig_stats() {
  return {g_warm_calls.load(), g_warm_sweeps.load(), g_dense_calls.load()};
}

void reset_eig_stats() {
  g_warm_calls = 0;
  g_warm_sweeps = 0;
  g_dense_calls = 0;
}

Eigen::VectorXd cholesky_spd_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  pin_blas_threads();
  const int n = static_cast<int>(A.rows());
  Eigen::MatrixXd Ac = A;
  Eigen::VectorXd x = b;
  lapack_int info = LAPACKE_dposv(LAPACK_COL_MAJOR, 'L', n, 1, Ac.data(), n, x.data(), n);
  if (info != 0)
    throw std::runtime_error("cholesky_spd_solve: matrix not positive definite (info = " +
                             std::to_string(info) + ")");
  return x;
}

Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& A) {
  pin_blas_threads();
  const int n = static_cast<int>(A.rows());
  Eigen::MatrixXd Ac = A;
  Eigen::VectorXd w(n);
  lapack_int info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, Ac.data(), n, w.data());
  if (info != 0)
    throw std::runtime_error("sym_eigenvalues: LAPACK dsyev failed, info = " +
                             std::to_string(info));
  return w;
}

} // namespace slfem
