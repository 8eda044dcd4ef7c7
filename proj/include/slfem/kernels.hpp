#pragma once

// Execution policy and the small vector kernels shared by the assembly and
// solver code paths. Every kernel has a serial reference implementation and
// an OpenMP one; the serial path is bit-reproducible and is what the
// --deterministic flag selects.

#include <cstddef>
#include <vector>

namespace slfem {

struct ExecPolicy {
  // Serial reference kernels with a fixed summation order.
  bool deterministic = false;

  static ExecPolicy serial() { return ExecPolicy{true}; }
  static ExecPolicy parallel() { return ExecPolicy{false}; }
};

namespace kernels {

// y[i] dot products; parallel version uses an OpenMP reduction and may
// reassociate the sum.
double dot(const double* x, const double* y, std::size_t n, const ExecPolicy& ex);
double dot(const std::vector<double>& x, const std::vector<double>& y, const ExecPolicy& ex);

double norm2(const double* x, std::size_t n, const ExecPolicy& ex);
double norm2(const std::vector<double>& x, const ExecPolicy& ex);

// y += a*x  (per-entry, deterministic in both modes)
void axpy(double a, const double* x, double* y, std::size_t n, const ExecPolicy& ex);

// y = x + a*y
void xpay(const double* x, double a, double* y, std::size_t n, const ExecPolicy& ex);

void scale(double a, double* x, std::size_t n, const ExecPolicy& ex);

int max_threads();

} // namespace kernels
} // namespace slfem
