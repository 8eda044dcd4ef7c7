#pragma once

// Experiment configuration: a flat-sectioned key-value text file covering the
// grid, the beta field, the source, solver tolerances and the sweep lists.
// Unknown keys and malformed values are validation errors naming the field.

#include <stdexcept>
#include <string>
#include <vector>

#include "slfem/coefficient.hpp"
#include "slfem/fine_solver.hpp"
#include "slfem/multiscale.hpp"

namespace slfem {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NbCell {
  int nb_off = 1;
  int nb_on = 0;
  std::string label() const;
};

struct ExperimentConfig {
  // [grid]
  int nx = 200, ny = 200;
  int Nx = 20, Ny = 20;

  // [beta]
  CoefficientSpec beta = CoefficientSpec::model1_like(1e-4);

  // [source]  f = paper means (sqrt(x^2+y^2+1), sqrt(x^2+y^2+1))
  enum class SourceKind { Paper, Constant } source_kind = SourceKind::Paper;
  double source_scale = 1.0;
  double fx = 0, fy = 0;

  // [picard]
  double delta0 = 1e-7;
  int max_iter = 200;
  double clamp_eps = 1e-6;
  ChangeNorm norm = ChangeNorm::Vh;

  // [solver]
  double cg_tol = 1e-10;
  int cg_max_iter = 40000;

  // [gmsfem]
  std::vector<NbCell> nb_cells = {{1, 0}, {3, 0}, {5, 0}, {7, 0}};
  std::vector<double> deltas = {kDeltaInf, 0.5, 0.25, 0.1, 0.0};
  double theta = 1.0;
  double online_tol = 0.0;
  PouMode pou = PouMode::Msfem;
  EigOptions::Method eig = EigOptions::Method::Auto;
  double dim_cap_fraction = 0.2;
  bool check_rank = true;

  // [output]
  std::string out_dir = "out";

  SourceFn source() const;
  PicardOptions picard_options(const ExecPolicy& ex) const;
  UpdatePolicy policy(const NbCell& cell, double delta) const;
  // Canonical text form; load_config_text(echo()) reproduces the config.
  std::string echo() const;

  void validate() const;  // throws ConfigError
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig load_config_text(const std::string& text);

} // namespace slfem
