// Strain-limiting elasticity on heterogeneous domains: fine-scale Picard
// reference solves and the multiscale (GMsFEM) sweep runner.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 non-convergence.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "slfem/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"slfem: strain-limiting elasticity multiscale solver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  slfem::RunFlags flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment configuration file")->required();
    cmd->add_option("--out", out_override, "override the output directory");
    cmd->add_option("--workers", flags.workers, "concurrent sweep cells (default 1)");
    cmd->add_flag("--deterministic", flags.deterministic,
                  "serial reference kernels; byte-reproducible outputs");
  };

  CLI::App* solve_fine = app.add_subcommand("solve-fine", "fine-grid Picard reference solve");
  add_common(solve_fine);

  CLI::App* sweep = app.add_subcommand("sweep", "fine reference plus the (Nb, delta) table");
  add_common(sweep);

  CLI::App* export_field = app.add_subcommand("export-field", "write a field CSV");
  add_common(export_field);
  std::string which = "u";
  int index = -1;
  export_field->add_option("--field", which, "u | kappa | pou");
  export_field->add_option("--index", index, "coarse node index for pou");

  CLI11_PARSE(app, argc, argv);

  try {
    slfem::ExperimentConfig cfg = slfem::load_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;

    if (solve_fine->parsed()) {
      slfem::run_solve_fine(cfg, flags);
      std::printf("solve-fine: wrote %s/u_fine.csv\n", cfg.out_dir.c_str());
    } else if (sweep->parsed()) {
      slfem::run_sweep(cfg, flags);
      std::printf("sweep: wrote %s/sweep.csv\n", cfg.out_dir.c_str());
    } else if (export_field->parsed()) {
      slfem::run_export_field(cfg, flags, which, index);
      std::printf("export-field: wrote %s field to %s\n", which.c_str(), cfg.out_dir.c_str());
    }
  } catch (const slfem::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const slfem::NonConvergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
