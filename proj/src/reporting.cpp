#include "slfem/reporting.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "slfem/fem.hpp"

namespace slfem {

namespace {

// Exact integral of |P1 field|^2 over the mesh: per triangle and component,
// v' M_e v with M_e = area/12 * (I + ones).
double l2_norm_sq(const FineMesh& mesh, const DisplacementField& u) {
  const double a12 = mesh.tri_area() / 12.0;
  double s = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int c = 0; c < 2; ++c) {
      double v1 = u[2 * tri[0] + c], v2 = u[2 * tri[1] + c], v3 = u[2 * tri[2] + c];
      double sum = v1 + v2 + v3;
      s += a12 * (sum * sum + v1 * v1 + v2 * v2 + v3 * v3);
    }
  }
  return s;
}

} // namespace

double error_l2(const FineMesh& mesh, const DisplacementField& u_ms,
                const DisplacementField& u_h) {
  double den = l2_norm_sq(mesh, u_h);
  if (den == 0.0) throw std::invalid_argument("error_l2: reference solution is zero");
  DisplacementField e(u_ms.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = u_ms[i] - u_h[i];
  return std::sqrt(l2_norm_sq(mesh, e) / den);
}

double error_energy(const FineMesh& mesh, const BetaField& beta,
                    const DisplacementField& u_ref_linearization, const DisplacementField& u_ms,
                    const DisplacementField& u_h, double clamp_eps) {
  auto kappa = kappa_field(mesh, beta, u_ref_linearization, clamp_eps);
  double den = energy_product(mesh, kappa, u_h, u_h, ExecPolicy::serial());
  if (den == 0.0) throw std::invalid_argument("error_energy: reference solution is zero");
  DisplacementField e(u_ms.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = u_ms[i] - u_h[i];
  return std::sqrt(energy_product(mesh, kappa, e, e, ExecPolicy::serial()) / den);
}

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return std::stod(s);
}

} // namespace

void write_table(const std::vector<TableRow>& rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("write_table: no rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_table: cannot open " + path);
  out << "nb,delta,e_l2,e_h1,picard_iters,basis_updates,online_bases,clamps,wall_ms\n";
  for (const auto& r : rows) {
    out << r.nb_label << ',' << fmt_double(r.delta) << ',' << fmt_double(r.err.e_l2) << ','
        << fmt_double(r.err.e_h1) << ',' << r.picard_iters << ',' << r.basis_updates << ','
        << r.online_bases << ',' << r.clamps << ',' << fmt_double(r.wall_ms) << '\n';
  }
  if (!out) throw std::runtime_error("write_table: write failed for " + path);
}

std::vector<TableRow> parse_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_table: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_table: empty file");

  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    TableRow r;
    std::getline(ss, r.nb_label, ',');
    std::getline(ss, field, ',');
    r.delta = parse_double(field);
    std::getline(ss, field, ',');
    r.err.e_l2 = parse_double(field);
    std::getline(ss, field, ',');
    r.err.e_h1 = parse_double(field);
    std::getline(ss, field, ',');
    r.picard_iters = std::stoi(field);
    std::getline(ss, field, ',');
    r.basis_updates = std::stoi(field);
    std::getline(ss, field, ',');
    r.online_bases = std::stoi(field);
    std::getline(ss, field, ',');
    r.clamps = std::stol(field);
    std::getline(ss, field, ',');
    r.wall_ms = parse_double(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_displacement_csv(const FineMesh& mesh, const DisplacementField& u,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_displacement_csv: cannot open " + path);
  out << "x,y,ux,uy\n";
  for (int v = 0; v < mesh.n_nodes(); ++v)
    out << fmt_double(mesh.nodes[v][0]) << ',' << fmt_double(mesh.nodes[v][1]) << ','
        << fmt_double(u[2 * v]) << ',' << fmt_double(u[2 * v + 1]) << '\n';
}

void write_kappa_csv(const FineMesh& mesh, const std::vector<double>& kappa,
                     const BetaField& beta, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_kappa_csv: cannot open " + path);
  out << "cx,cy,kappa,beta\n";
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    auto c = mesh.centroid(t);
    out << fmt_double(c[0]) << ',' << fmt_double(c[1]) << ',' << fmt_double(kappa[t]) << ','
        << fmt_double(beta.values[t]) << '\n';
  }
}

void write_scalar_nodes_csv(const FineMesh& mesh, const std::vector<int>& nodes,
                            const std::vector<double>& values, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_scalar_nodes_csv: cannot open " + path);
  out << "i,x,y,chi\n";
  for (std::size_t k = 0; k < nodes.size(); ++k)
    out << nodes[k] << ',' << fmt_double(mesh.nodes[nodes[k]][0]) << ','
        << fmt_double(mesh.nodes[nodes[k]][1]) << ',' << fmt_double(values[k]) << '\n';
}

} // namespace slfem
