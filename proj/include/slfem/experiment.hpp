#pragma once

// Experiment entry points behind the CLI subcommands. All outputs land in
// cfg.out_dir; runs are fully deterministic given a config (seed-free), and
// bit-reproducible with deterministic = true.

#include <string>

#include "slfem/config.hpp"

namespace slfem {

struct RunFlags {
  int workers = 1;            // > 1 runs sweep cells concurrently
  bool deterministic = false; // serial reference kernels everywhere
};

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fine Picard solve; writes u_fine.csv and fine_trace.csv.
void run_solve_fine(const ExperimentConfig& cfg, const RunFlags& flags);

// Fine reference once, then one gmsfem_picard run per (nb cell, delta);
// writes sweep.csv plus config_echo.ini.
void run_sweep(const ExperimentConfig& cfg, const RunFlags& flags);

// which: "u" (fine solution), "kappa" (coefficient at the fine solution) or
// "pou" (partition-of-unity function `index` at the zero linearization).
void run_export_field(const ExperimentConfig& cfg, const RunFlags& flags,
                      const std::string& which, int index = -1);

} // namespace slfem
