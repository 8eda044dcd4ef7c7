#pragma once

// Test-only oracles, deliberately independent of the library's solver paths:
// a cyclic Jacobi eigensolver, a hand-rolled Cholesky, a degree-5 triangle
// quadrature and a P1 interpolant evaluator.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "slfem/grid.hpp"

namespace oracles {

// Cyclic Jacobi rotations; returns eigenvalues ascending with eigenvectors in
// matching column order.
inline void jacobi_eigh(Eigen::MatrixXd A, Eigen::VectorXd& evals, Eigen::MatrixXd& evecs) {
  const int n = static_cast<int>(A.rows());
  evecs = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-30 * A.diagonal().cwiseAbs().maxCoeff()) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (A(p, q) == 0.0) continue;
        double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        Eigen::VectorXd Ap = A.col(p), Aq = A.col(q);
        A.col(p) = c * Ap - s * Aq;
        A.col(q) = s * Ap + c * Aq;
        Ap = A.row(p);
        Aq = A.row(q);
        A.row(p) = c * Ap.transpose() - s * Aq.transpose();
        A.row(q) = s * Ap.transpose() + c * Aq.transpose();
        Eigen::VectorXd Vp = evecs.col(p), Vq = evecs.col(q);
        evecs.col(p) = c * Vp - s * Vq;
        evecs.col(q) = s * Vp + c * Vq;
      }
    }
  }
  evals = A.diagonal();
  // sort ascending
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return evals(a) < evals(b); });
  Eigen::VectorXd ev(n);
  Eigen::MatrixXd V(n, n);
  for (int i = 0; i < n; ++i) {
    ev(i) = evals(idx[i]);
    V.col(i) = evecs.col(idx[i]);
  }
  evals = ev;
  evecs = V;
}

// Lower Cholesky, throws if not SPD.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& M) {
  const int n = static_cast<int>(M.rows());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = M(j, j);
    for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d <= 0) throw std::runtime_error("oracle cholesky: not SPD");
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = M(i, j);
      for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

// Generalized A x = lambda M x via Cholesky reduction plus Jacobi.
inline void generalized_eigh_oracle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M,
                                    Eigen::VectorXd& evals, Eigen::MatrixXd& evecs) {
  Eigen::MatrixXd L = cholesky_lower(M);
  Eigen::MatrixXd B =
      L.triangularView<Eigen::Lower>().solve(A.transpose()).transpose();
  B = L.triangularView<Eigen::Lower>().solve(B);
  B = 0.5 * (B + B.transpose());
  Eigen::MatrixXd Y;
  jacobi_eigh(B, evals, Y);
  evecs = L.transpose().triangularView<Eigen::Upper>().solve(Y);
}

// Dense SPD solve via the oracle Cholesky.
inline Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::MatrixXd L = cholesky_lower(A);
  Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(b);
  return L.transpose().triangularView<Eigen::Upper>().solve(y);
}

// Degree-5 7-point Gauss rule on a triangle; f takes (x, y).
template <typename F>
double gauss7(const std::array<double, 2>& v0, const std::array<double, 2>& v1,
              const std::array<double, 2>& v2, F&& f) {
  static const double w1 = 9.0 / 40.0;
  static const double w2 = (155.0 + std::sqrt(15.0)) / 1200.0;
  static const double w3 = (155.0 - std::sqrt(15.0)) / 1200.0;
  static const double a2 = (6.0 + std::sqrt(15.0)) / 21.0;   // group-2 repeated coordinate
  static const double b2 = (9.0 - 2.0 * std::sqrt(15.0)) / 21.0;
  static const double a3 = (6.0 - std::sqrt(15.0)) / 21.0;
  static const double b3 = (9.0 + 2.0 * std::sqrt(15.0)) / 21.0;

  const double bary[7][3] = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {b2, a2, a2}, {a2, b2, a2},
                             {a2, a2, b2},                {b3, a3, a3}, {a3, b3, a3},
                             {a3, a3, b3}};
  const double w[7] = {w1, w2, w2, w2, w3, w3, w3};

  double area = 0.5 * std::abs((v1[0] - v0[0]) * (v2[1] - v0[1]) -
                               (v2[0] - v0[0]) * (v1[1] - v0[1]));
  double s = 0;
  for (int q = 0; q < 7; ++q) {
    double x = bary[q][0] * v0[0] + bary[q][1] * v1[0] + bary[q][2] * v2[0];
    double y = bary[q][0] * v0[1] + bary[q][1] * v1[1] + bary[q][2] * v2[1];
    s += w[q] * f(x, y);
  }
  return s * area;
}

// Evaluates the P1 interpolant of a nodal 2-vector field at an interior
// point (both components).
inline std::array<double, 2> eval_p1(const slfem::FineMesh& mesh, const std::vector<double>& u,
                                     double x, double y) {
  int i = std::min(mesh.nx - 1, std::max(0, static_cast<int>(x / mesh.hx)));
  int j = std::min(mesh.ny - 1, std::max(0, static_cast<int>(y / mesh.hy)));
  double lx = (x - i * mesh.hx) / mesh.hx, ly = (y - j * mesh.hy) / mesh.hy;
  int t = 2 * (j * mesh.nx + i) + (lx >= ly ? 0 : 1);
  const auto& tri = mesh.triangles[t];
  // barycentric coordinates on the actual triangle
  const auto& p0 = mesh.nodes[tri[0]];
  const auto& p1 = mesh.nodes[tri[1]];
  const auto& p2 = mesh.nodes[tri[2]];
  double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
  double l1 = ((x - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (y - p0[1])) / det;
  double l2 = ((p1[0] - p0[0]) * (y - p0[1]) - (x - p0[0]) * (p1[1] - p0[1])) / det;
  double l0 = 1.0 - l1 - l2;
  std::array<double, 2> out{};
  for (int c = 0; c < 2; ++c)
    out[c] = l0 * u[2 * tri[0] + c] + l1 * u[2 * tri[1] + c] + l2 * u[2 * tri[2] + c];
  return out;
}

inline std::mt19937& rng() {
  static std::mt19937 gen(20240811u);
  return gen;
}

inline double uniform(double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng());
}

} // namespace oracles
