#include <doctest.h>

#include "oracles.hpp"
#include "slfem/fem.hpp"
#include "slfem/linalg.hpp"
#include "slfem/multiscale.hpp"

using namespace slfem;

namespace {

SparseSpd dense_to_csr(const Eigen::MatrixXd& D) {
  SparseSpd A;
  A.n = static_cast<int>(D.rows());
  A.row_ptr.push_back(0);
  for (int r = 0; r < A.n; ++r) {
    for (int c = 0; c < A.n; ++c)
      if (D(r, c) != 0.0) {
        A.cols.push_back(c);
        A.vals.push_back(D(r, c));
      }
    A.row_ptr.push_back(static_cast<int>(A.cols.size()));
  }
  return A;
}

Eigen::MatrixXd random_spd(int n, double shift) {
  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = oracles::uniform(-1, 1);
  return R.transpose() * R + shift * Eigen::MatrixXd::Identity(n, n);
}

} // namespace

TEST_CASE("cg on the identity and a 2x2 system") {
  SparseSpd I = dense_to_csr(Eigen::MatrixXd::Identity(5, 5));
  std::vector<double> b = {1, -2, 3, 0.5, 0};
  auto r = spd_solve(I, b);
  REQUIRE(r.converged);
  for (int i = 0; i < 5; ++i) CHECK(r.x[i] == doctest::Approx(b[i]).epsilon(1e-12));

  Eigen::MatrixXd D(2, 2);
  D << 2, -1, -1, 2;
  auto r2 = spd_solve(dense_to_csr(D), {1, 0});
  REQUIRE(r2.converged);
  CHECK(r2.x[0] == doctest::Approx(2.0 / 3).epsilon(1e-9));
  CHECK(r2.x[1] == doctest::Approx(1.0 / 3).epsilon(1e-9));
}

TEST_CASE("cg matches a dense factorization oracle on random spd") {
  const int n = 50;
  Eigen::MatrixXd D = random_spd(n, 1.0);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) b(i) = oracles::uniform(-1, 1);

  std::vector<double> bv(b.data(), b.data() + n);
  auto r = spd_solve(dense_to_csr(D), bv, 1e-12, 10000);
  REQUIRE(r.converged);
  Eigen::VectorXd xo = oracles::cholesky_solve(D, b);
  for (int i = 0; i < n; ++i) CHECK(r.x[i] == doctest::Approx(xo(i)).epsilon(1e-8));
}

TEST_CASE("cg objective is non-increasing") {
  const int n = 40;
  Eigen::MatrixXd D = random_spd(n, 0.5);
  std::vector<double> b(n);
  for (auto& v : b) v = oracles::uniform(-1, 1);
  std::vector<double> trace;
  auto r = spd_solve(dense_to_csr(D), b, 1e-12, 500, nullptr, ExecPolicy::serial(), &trace);
  REQUIRE(r.converged);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("cg reports non-convergence with the achieved residual") {
  FineMesh m = build_fine_mesh(16, 16);
  BetaField beta = build_beta_field(m, CoefficientSpec::constant(1.0));
  DisplacementField zero(2 * m.n_nodes(), 0.0);
  SparseSpd A = assemble_stiffness(m, beta, zero, 1e-6);
  std::vector<double> b(A.n, 1.0);
  auto r = spd_solve(A, b, 1e-12, 3);
  CHECK(!r.converged);
  CHECK(r.iterations == 3);
  CHECK(r.rel_residual > 1e-12);
  CHECK(std::isfinite(r.rel_residual));
}

TEST_CASE("generalized eigensolver basics") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(0, 0) = 2;
  A(1, 1) = 1;
  auto pairs = generalized_eigh(A, Eigen::MatrixXd::Identity(2, 2), 2);
  CHECK(pairs[0].lambda == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(pairs[1].lambda == doctest::Approx(2.0).epsilon(1e-13));

  Eigen::MatrixXd M = random_spd(10, 2.0);
  auto same = generalized_eigh(M, M, 4);
  for (const auto& p : same) CHECK(p.lambda == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("generalized eigensolver matches the jacobi oracle") {
  const int n = 30, k = 6;
  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = oracles::uniform(-1, 1);
  Eigen::MatrixXd A = R.transpose() * R;  // PSD
  Eigen::MatrixXd M = random_spd(n, 3.0);

  auto pairs = generalized_eigh(A, M, k);
  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  oracles::generalized_eigh_oracle(A, M, evals, evecs);

  double scale = evals.cwiseAbs().maxCoeff();
  for (int j = 0; j < k; ++j) {
    CHECK(pairs[j].lambda == doctest::Approx(evals(j)).epsilon(1e-8));
    if (j > 0) CHECK(pairs[j].lambda >= pairs[j - 1].lambda - 1e-12 * scale);
  }

  // M-orthonormality and eigenresiduals
  double anorm = A.cwiseAbs().rowwise().sum().maxCoeff();
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      double dot = pairs[a].vector.dot(M * pairs[b].vector);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-9));
    }
    double res = (A * pairs[a].vector - pairs[a].lambda * (M * pairs[a].vector)).norm();
    CHECK(res <= 1e-8 * anorm);
  }
}

TEST_CASE("generalized eigensolver rejects bad inputs") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd Mbad = Eigen::MatrixXd::Identity(4, 4);
  Mbad(2, 2) = -1.0;
  CHECK_THROWS_AS(generalized_eigh(A, Mbad, 2), std::runtime_error);
  CHECK_THROWS_AS(generalized_eigh(A, Eigen::MatrixXd::Identity(4, 4), 5),
                  std::invalid_argument);
}

TEST_CASE("rigid motion nullspace of a free-floating local stiffness") {
  FineMesh m = build_fine_mesh(20, 20);
  CoarseGrid g = build_coarse_grid(m, 4, 4);
  Neighborhood nb = neighborhood(g, m, g.coarse_node_index(2, 2));
  BetaField beta = build_beta_field(m, CoefficientSpec::channels(1.0, 50.0, {{0.3, 0.3, 0.7, 0.7}}));
  DisplacementField zero(2 * m.n_nodes(), 0.0);
  auto kappa = kappa_field(m, beta, zero, 1e-6);
  for (std::size_t t = 0; t < kappa.size(); ++t) kappa[t] = beta.values[t];  // heterogeneous weight

  Eigen::MatrixXd A = local_stiffness(m, nb, kappa);
  std::vector<double> pg(m.n_triangles(), 1.0);
  Eigen::MatrixXd M = assemble_weighted_mass(m, nb, kappa, pg);

  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  oracles::generalized_eigh_oracle(A, M, evals, evecs);
  double lambda_max = evals(evals.size() - 1);
  int below = 0;
  for (int i = 0; i < evals.size(); ++i)
    if (evals(i) < 1e-10 * lambda_max) ++below;
  CHECK(below == 3);

  auto pairs = generalized_eigh(A, M, 4);
  for (int j = 0; j < 3; ++j) CHECK(pairs[j].lambda < 1e-10 * lambda_max);
  CHECK(pairs[3].lambda > 1e-10 * lambda_max);
}

TEST_CASE("warm-started eigensolver agrees with the dense route") {
  FineMesh m = build_fine_mesh(40, 40);
  CoarseGrid g = build_coarse_grid(m, 4, 4);
  Neighborhood nb = neighborhood(g, m, g.coarse_node_index(2, 2));
  BetaField beta = build_beta_field(m, CoefficientSpec::channels(1.0, 20.0, {{0.0, 0.45, 1.0, 0.55}}));

  DisplacementField u(2 * m.n_nodes(), 0.0);
  auto kappa = kappa_field(m, beta, u, 1e-6);
  // make the weight heterogeneous
  for (std::size_t t = 0; t < kappa.size(); ++t) kappa[t] = beta.values[t];
  std::vector<double> pg(m.n_triangles(), 0.7);

  Eigen::MatrixXd A = local_stiffness(m, nb, kappa);
  Eigen::MatrixXd M = assemble_weighted_mass(m, nb, kappa, pg);
  int kd = local_bandwidth(m, nb);
  const int k = 5;

  Eigen::MatrixXd warm;  // empty: first call takes the dense path and seeds it
  auto cold = generalized_eigh_warm(A, M, k, kd, &warm);
  auto ref = generalized_eigh(A, M, k);
  REQUIRE(warm.cols() >= k);
  for (int j = 0; j < k; ++j)
    CHECK(cold[j].lambda == doctest::Approx(ref[j].lambda).epsilon(1e-10));

  // perturb the coefficient and re-solve warm; compare against dense
  for (auto& v : kappa) v *= 1.05;
  Eigen::MatrixXd A2 = local_stiffness(m, nb, kappa);
  Eigen::MatrixXd M2 = assemble_weighted_mass(m, nb, kappa, pg);
  auto warm_pairs = generalized_eigh_warm(A2, M2, k, kd, &warm);
  auto dense_pairs = generalized_eigh(A2, M2, k);

  double scale = std::abs(dense_pairs[k - 1].lambda);
  double anorm = A2.cwiseAbs().rowwise().sum().maxCoeff();
  for (int j = 0; j < k; ++j) {
    CHECK(std::abs(warm_pairs[j].lambda - dense_pairs[j].lambda) <= 1e-8 * scale);
    double res =
        (A2 * warm_pairs[j].vector - warm_pairs[j].lambda * (M2 * warm_pairs[j].vector)).norm();
    CHECK(res <= 1e-8 * anorm);
    for (int i = 0; i <= j; ++i) {
      double dot = warm_pairs[i].vector.dot(M2 * warm_pairs[j].vector);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
    }
  }
}
