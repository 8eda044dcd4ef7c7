#pragma once

// Fine-scale reference solution by Picard iteration: freeze kappa at the
// previous iterate, solve the weighted linear problem, repeat until the
// relative change drops below delta0.

#include <cstdint>
#include <vector>

#include "slfem/coefficient.hpp"
#include "slfem/fem.hpp"
#include "slfem/kernels.hpp"

namespace slfem {

enum class ChangeNorm { Vh, L2 };

struct PicardOptions {
  double delta0 = 1e-7;
  int max_iter = 200;
  double clamp_eps = 1e-6;
  ChangeNorm norm = ChangeNorm::Vh;
  double cg_tol = 1e-10;
  int cg_max_iter = 40000;
  ExecPolicy exec;
};

struct PicardIterationRecord {
  double change = 0;       // relative solution change
  std::int64_t clamps = 0; // clamping events during this iteration's assembly
  int cg_iterations = 0;
};

struct PicardTrace {
  std::vector<PicardIterationRecord> iterations;
  bool converged = false;
  std::int64_t final_clamps = 0;  // clamps when evaluating kappa at the final iterate

  int count() const { return static_cast<int>(iterations.size()); }
};

struct FineSolveResult {
  DisplacementField u;
  PicardTrace trace;
};

FineSolveResult picard_solve_fine(const FineMesh& mesh, const BetaField& beta, const SourceFn& f,
                                  const PicardOptions& opt = {});

// Euclidean norm of b - A(u) u over free dofs, with A(u) assembled at u.
double nonlinear_residual(const FineMesh& mesh, const BetaField& beta, const SourceFn& f,
                          const DisplacementField& u, double clamp_eps = 1e-6,
                          const ExecPolicy& ex = {});

} // namespace slfem
