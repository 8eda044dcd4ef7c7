#include <doctest.h>

#include "slfem/config.hpp"

using namespace slfem;

TEST_CASE("defaults follow the reference experiment") {
  ExperimentConfig cfg = load_config_text("");
  CHECK(cfg.nx == 200);
  CHECK(cfg.Nx == 20);
  CHECK(cfg.delta0 == 1e-7);
  CHECK(cfg.source_kind == ExperimentConfig::SourceKind::Paper);
  CHECK(cfg.nb_cells.size() == 4);
  CHECK(cfg.deltas.size() == 5);
  CHECK(std::isinf(cfg.deltas[0]));

  auto f = cfg.source()(0.0, 0.0);
  CHECK(f[0] == doctest::Approx(1.0));
  auto f2 = cfg.source()(1.0, 1.0);
  CHECK(f2[1] == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("full config parses") {
  ExperimentConfig cfg = load_config_text(R"(
[grid]
nx = 100
ny = 100
Nx = 10
Ny = 10

[beta]
spec = channels
background = 1.0
channel_value = 1e4
rect = 0.1 0.2 0.9 0.25
rect = 0.3 0.6 0.7 0.65

[source]
f = paper
scale = 1e-4

[picard]
delta0 = 1e-7
max_iter = 150
norm = vh

[gmsfem]
nb_off = 1 3 5 1
nb_on = 2 2 2 4
delta = inf 0.5 0.25 0.1 0
theta = 1.0
pou = msfem
eig = dense

[output]
dir = results
)");
  CHECK(cfg.nx == 100);
  CHECK(cfg.beta.kind == CoefficientSpec::Kind::Channels);
  CHECK(cfg.beta.rects.size() == 2);
  CHECK(cfg.beta.channel_value == doctest::Approx(1e4));
  CHECK(cfg.source_scale == doctest::Approx(1e-4));
  REQUIRE(cfg.nb_cells.size() == 4);
  CHECK(cfg.nb_cells[0].label() == "1+2");
  CHECK(cfg.nb_cells[3].label() == "1+4");
  CHECK(cfg.eig == EigOptions::Method::Dense);
  CHECK(cfg.out_dir == "results");

  auto f = cfg.source()(0.0, 0.0);
  CHECK(f[0] == doctest::Approx(1e-4));
}

TEST_CASE("validation names the offending field") {
  CHECK_THROWS_WITH_AS(load_config_text("[picard]\ndelta0 = 0\n"),
                       doctest::Contains("picard.delta0"), ConfigError);
  CHECK_THROWS_WITH_AS(load_config_text("[grid]\nnx = 10\nNx = 3\n"), doctest::Contains("grid"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(load_config_text("[gmsfem]\ntheta = 1.5\n"),
                       doctest::Contains("gmsfem.theta"), ConfigError);
  CHECK_THROWS_AS(load_config_text("[grid]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_config_text("[nosuch]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_config_text("[gmsfem]\nnb_off = 1 3\nnb_on = 2 2 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config_text("[picard]\ndelta0 = abc\n"), ConfigError);
}

TEST_CASE("echo round-trips the configuration") {
  ExperimentConfig cfg = load_config_text(R"(
[grid]
nx = 40
ny = 40
Nx = 4
Ny = 4

[beta]
spec = model2-like
channel_value = 1e4

[source]
f = constant
fx = 1.0
fy = -0.5
scale = 2.0

[gmsfem]
nb_off = 3
nb_on = 2
delta = 0.1 0
check_rank = false
)");
  ExperimentConfig back = load_config_text(cfg.echo());
  CHECK(back.echo() == cfg.echo());
  CHECK(back.nx == cfg.nx);
  CHECK(back.beta.rects.size() == cfg.beta.rects.size());
  CHECK(back.fx == cfg.fx);
  CHECK(back.check_rank == false);
  CHECK(back.nb_cells.size() == 1);
  CHECK(back.nb_cells[0].label() == "3+2");
}
