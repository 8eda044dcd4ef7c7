#pragma once

// Error metrics against the fine reference and the CSV emitters for tables
// and field exports.

#include <string>
#include <vector>

#include "slfem/coefficient.hpp"
#include "slfem/grid.hpp"

namespace slfem {

struct ErrorPair {
  double e_l2 = 0;
  double e_h1 = 0;
};

// Relative L2 error via exact P1 mass quadrature; u_h must be nonzero.
double error_l2(const FineMesh& mesh, const DisplacementField& u_ms, const DisplacementField& u_h);

// Relative energy error, with kappa frozen at |D(u_ref_linearization)|.
double error_energy(const FineMesh& mesh, const BetaField& beta,
                    const DisplacementField& u_ref_linearization, const DisplacementField& u_ms,
                    const DisplacementField& u_h, double clamp_eps = 1e-6);

struct TableRow {
  std::string nb_label;  // "3" or "3+2"
  double delta = 0;      // inf serialized as "inf"
  ErrorPair err;
  int picard_iters = 0;
  int basis_updates = 0;
  int online_bases = 0;
  long clamps = 0;
  double wall_ms = 0;
};

// CSV with header nb,delta,e_l2,e_h1,picard_iters,basis_updates,online_bases,clamps,wall_ms
void write_table(const std::vector<TableRow>& rows, const std::string& path);
std::vector<TableRow> parse_table(const std::string& path);

// x,y,ux,uy per node.
void write_displacement_csv(const FineMesh& mesh, const DisplacementField& u,
                            const std::string& path);
// cx,cy,kappa,beta per triangle centroid.
void write_kappa_csv(const FineMesh& mesh, const std::vector<double>& kappa,
                     const BetaField& beta, const std::string& path);
// i,x,y,chi per node of one partition-of-unity function.
void write_scalar_nodes_csv(const FineMesh& mesh, const std::vector<int>& nodes,
                            const std::vector<double>& values, const std::string& path);

} // namespace slfem
