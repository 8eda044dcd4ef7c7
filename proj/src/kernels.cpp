#include "slfem/kernels.hpp"

#include <cmath>
#include <omp.h>

namespace slfem {
namespace kernels {

double dot(const double* x, const double* y, std::size_t n, const ExecPolicy& ex) {
  double s = 0.0;
  if (ex.deterministic) {
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  } else {
#pragma omp parallel for reduction(+ : s) schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) s += x[i] * y[i];
  }
  return s;
}

double dot(const std::vector<double>& x, const std::vector<double>& y, const ExecPolicy& ex) {
  return dot(x.data(), y.data(), x.size(), ex);
}

double norm2(const double* x, std::size_t n, const ExecPolicy& ex) {
  return std::sqrt(dot(x, x, n, ex));
}

double norm2(const std::vector<double>& x, const ExecPolicy& ex) {
  return norm2(x.data(), x.size(), ex);
}

void axpy(double a, const double* x, double* y, std::size_t n, const ExecPolicy& ex) {
  if (ex.deterministic) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] += a * x[i];
  }
}

void xpay(const double* x, double a, double* y, std::size_t n, const ExecPolicy& ex) {
  if (ex.deterministic) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + a * y[i];
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = x[i] + a * y[i];
  }
}

void scale(double a, double* x, std::size_t n, const ExecPolicy& ex) {
  if (ex.deterministic) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) x[i] *= a;
  }
}

int max_threads() { return omp_get_max_threads(); }

} // namespace kernels
} // namespace slfem
