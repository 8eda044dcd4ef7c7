#include "slfem/fine_solver.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "slfem/linalg.hpp"

namespace slfem {

namespace {

double change_norm(const SparseSpd& A, const std::vector<double>& u_new,
                   const std::vector<double>& u_old, ChangeNorm norm, const ExecPolicy& ex) {
  const std::size_t n = u_new.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = u_new[i] - u_old[i];

  if (norm == ChangeNorm::Vh) {
    std::vector<double> tmp(n);
    A.multiply(d.data(), tmp.data(), ex);
    double num = kernels::dot(d, tmp, ex);
    A.multiply(u_old.data(), tmp.data(), ex);
    double den = kernels::dot(u_old, tmp, ex);
    if (den <= 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
  }
  double den = kernels::norm2(u_old, ex);
  double num = kernels::norm2(d, ex);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

} // namespace

FineSolveResult picard_solve_fine(const FineMesh& mesh, const BetaField& beta, const SourceFn& f,
                                  const PicardOptions& opt) {
  if (!(opt.delta0 > 0.0)) throw std::invalid_argument("picard_solve_fine: delta0 must be > 0");

  FineSolveResult res;
  StiffnessAssembler assembler(mesh);
  const std::vector<double> b = assemble_load(mesh, f, opt.exec);

  std::vector<double> u(static_cast<std::size_t>(mesh.n_free_dofs), 0.0);
  DisplacementField u_full(static_cast<std::size_t>(2) * mesh.n_nodes(), 0.0);

  if (kernels::norm2(b, opt.exec) == 0.0) {
    res.trace.iterations.push_back({0.0, 0, 0});
    res.trace.converged = true;
    res.u = u_full;
    return res;
  }

  for (int n = 0; n < opt.max_iter; ++n) {
    ClampCounter clamps;
    auto kappa = kappa_field(mesh, beta, u_full, opt.clamp_eps, &clamps, opt.exec);
    SparseSpd A = assembler.assemble(kappa, opt.exec);

    CgResult cg = spd_solve(A, b, opt.cg_tol, opt.cg_max_iter, n > 0 ? &u : nullptr, opt.exec);

    PicardIterationRecord rec;
    rec.clamps = clamps.total();
    rec.cg_iterations = cg.iterations;
    rec.change = n == 0 ? std::numeric_limits<double>::infinity()
                        : change_norm(A, cg.x, u, opt.norm, opt.exec);
    res.trace.iterations.push_back(rec);

    u = cg.x;
    u_full = expand_from_free(mesh, u);

    if (n > 0 && rec.change <= opt.delta0) {
      res.trace.converged = true;
      break;
    }
  }

  // Certify admissibility of the final iterate.
  ClampCounter final_clamps;
  (void)kappa_field(mesh, beta, u_full, opt.clamp_eps, &final_clamps, opt.exec);
  res.trace.final_clamps = final_clamps.total();
  res.u = u_full;
  return res;
}

double nonlinear_residual(const FineMesh& mesh, const BetaField& beta, const SourceFn& f,
                          const DisplacementField& u, double clamp_eps, const ExecPolicy& ex) {
  auto kappa = kappa_field(mesh, beta, u, clamp_eps, nullptr, ex);
  StiffnessAssembler assembler(mesh);
  SparseSpd A = assembler.assemble(kappa, ex);
  std::vector<double> b = assemble_load(mesh, f, ex);
  std::vector<double> x = restrict_to_free(mesh, u);
  std::vector<double> Ax(x.size());
  A.multiply(x.data(), Ax.data(), ex);
  for (std::size_t i = 0; i < x.size(); ++i) Ax[i] = b[i] - Ax[i];
  return kernels::norm2(Ax, ex);
}

} // namespace slfem
