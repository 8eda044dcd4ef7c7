#include "slfem/coefficient.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slfem {

double StrainTensor::norm() const {
  return std::sqrt(e11 * e11 + e22 * e22 + 2.0 * e12 * e12);
}

double eval_kappa(double beta, double s, double clamp_eps, ClampCounter* clamps) {
  double d = 1.0 - beta * s;
  if (d < clamp_eps) {
    if (clamps) clamps->add(1);
    d = clamp_eps;
  }
  return 1.0 / d;
}

StrainTensor constitutive_stress(const StrainTensor& xi, double beta) {
  double n = xi.norm();
  if (beta * n >= 1.0)
    throw std::domain_error("constitutive_stress: beta*|xi| = " + std::to_string(beta * n) +
                            " >= 1 is outside the admissible strain set");
  double f = 1.0 / (1.0 - beta * n);
  return {f * xi.e11, f * xi.e22, f * xi.e12};
}

StrainTensor inverse_strain(const StrainTensor& T, double beta) {
  double f = 1.0 / (1.0 + beta * T.norm());
  return {f * T.e11, f * T.e22, f * T.e12};
}

StrainTensor element_strain(const FineMesh& mesh, const DisplacementField& u, int t) {
  const auto& tri = mesh.triangles[t];
  const auto& g = mesh.grads[mesh.tri_class(t)];
  double ux_x = 0, ux_y = 0, uy_x = 0, uy_y = 0;
  for (int k = 0; k < 3; ++k) {
    double ux = u[2 * tri[k]], uy = u[2 * tri[k] + 1];
    ux_x += ux * g[k][0];
    ux_y += ux * g[k][1];
    uy_x += uy * g[k][0];
    uy_y += uy * g[k][1];
  }
  return {ux_x, uy_y, 0.5 * (ux_y + uy_x)};
}

std::vector<double> kappa_field(const FineMesh& mesh, const BetaField& beta,
                                const DisplacementField& u, double clamp_eps,
                                ClampCounter* clamps, const ExecPolicy& ex) {
  const int nt = mesh.n_triangles();
  std::vector<double> kappa(nt);
  if (ex.deterministic) {
    for (int t = 0; t < nt; ++t)
      kappa[t] = eval_kappa(beta.values[t], element_strain(mesh, u, t).norm(), clamp_eps, clamps);
  } else {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < nt; ++t)
      kappa[t] = eval_kappa(beta.values[t], element_strain(mesh, u, t).norm(), clamp_eps, clamps);
  }
  return kappa;
}

CoefficientSpec CoefficientSpec::constant(double v) {
  CoefficientSpec s;
  s.kind = Kind::Constant;
  s.value = v;
  return s;
}

CoefficientSpec CoefficientSpec::channels(double background, double channel_value,
                                          std::vector<Rect> rects) {
  CoefficientSpec s;
  s.kind = Kind::Channels;
  s.background = background;
  s.channel_value = channel_value;
  s.rects = std::move(rects);
  return s;
}

CoefficientSpec CoefficientSpec::raster(std::string path) {
  CoefficientSpec s;
  s.kind = Kind::Raster;
  s.raster_path = std::move(path);
  return s;
}

// Channel layouts: long thin rectangles crossing many coarse cells, two
// horizontal families plus vertical connectors. Geometry is defined by this
// artifact (see README), not taken from any external source.
CoefficientSpec CoefficientSpec::model1_like(double channel_value) {
  return channels(1.0, channel_value,
                  {{0.05, 0.22, 0.95, 0.26},
                   {0.05, 0.48, 0.75, 0.52},
                   {0.25, 0.74, 0.95, 0.78},
                   {0.60, 0.10, 0.64, 0.62}});
}

CoefficientSpec CoefficientSpec::model2_like(double channel_value) {
  return channels(1.0, channel_value,
                  {{0.05, 0.14, 0.70, 0.18},
                   {0.30, 0.34, 0.95, 0.38},
                   {0.05, 0.56, 0.60, 0.60},
                   {0.40, 0.80, 0.95, 0.84},
                   {0.18, 0.30, 0.22, 0.88},
                   {0.78, 0.12, 0.82, 0.60}});
}

namespace {

std::vector<double> read_raster(const std::string& path, int nx, int ny) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("build_beta_field: cannot open raster file " + path);
  int rows = 0, cols = 0;
  if (!(in >> rows >> cols))
    throw std::runtime_error("build_beta_field: raster header must be 'rows cols'");
  if (rows != ny || cols != nx)
    throw std::runtime_error("build_beta_field: raster is " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " but the mesh has " + std::to_string(ny) +
                             "x" + std::to_string(nx) + " cells");
  std::vector<double> cells(static_cast<std::size_t>(rows) * cols);
  for (auto& v : cells) {
    if (!(in >> v)) throw std::runtime_error("build_beta_field: raster file truncated");
    if (!(v > 0.0)) throw std::runtime_error("build_beta_field: raster values must be positive");
  }
  return cells;
}

} // namespace

BetaField build_beta_field(const FineMesh& mesh, const CoefficientSpec& spec) {
  BetaField f;
  f.values.resize(mesh.n_triangles());

  switch (spec.kind) {
    case CoefficientSpec::Kind::Constant: {
      if (!(spec.value > 0.0))
        throw std::invalid_argument("build_beta_field: constant beta must be positive");
      std::fill(f.values.begin(), f.values.end(), spec.value);
      break;
    }
    case CoefficientSpec::Kind::Channels: {
      if (!(spec.background > 0.0) || !(spec.channel_value > 0.0))
        throw std::invalid_argument("build_beta_field: beta values must be positive");
      for (int t = 0; t < mesh.n_triangles(); ++t) {
        auto c = mesh.centroid(t);
        bool inside = false;
        for (const auto& r : spec.rects)
          if (r.contains(c[0], c[1])) {
            inside = true;
            break;
          }
        f.values[t] = inside ? spec.channel_value : spec.background;
      }
      break;
    }
    case CoefficientSpec::Kind::Raster: {
      auto cells = read_raster(spec.raster_path, mesh.nx, mesh.ny);
      for (int t = 0; t < mesh.n_triangles(); ++t) {
        int cell = t / 2;  // both triangles of a cell share the value
        f.values[t] = cells[cell];
      }
      break;
    }
  }

  f.m = *std::min_element(f.values.begin(), f.values.end());
  f.M = *std::max_element(f.values.begin(), f.values.end());
  return f;
}

} // namespace slfem
