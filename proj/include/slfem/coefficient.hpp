#pragma once

// Strain-limiting constitutive relation and the heterogeneous parameter
// field beta(x). The linearized coefficient kappa = 1/(1 - beta*|E|) is
// clamped away from the singularity during intermediate iterations; clamping
// events are counted so a converged solve can certify it never engaged.

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slfem/grid.hpp"
#include "slfem/kernels.hpp"

namespace slfem {

// Nodal 2-vector field over all fine nodes, zero at Dirichlet nodes.
using DisplacementField = std::vector<double>;

struct StrainTensor {
  double e11 = 0, e22 = 0, e12 = 0;

  // Frobenius norm of the symmetric matrix.
  double norm() const;
};

struct BetaField {
  std::vector<double> values;  // one per fine triangle, > 0
  double m = 0, M = 0;         // range
};

class ClampCounter {
public:
  void add(std::int64_t k) { count_.fetch_add(k, std::memory_order_relaxed); }
  std::int64_t total() const { return count_.load(std::memory_order_relaxed); }
  void reset() { count_.store(0, std::memory_order_relaxed); }

private:
  std::atomic<std::int64_t> count_{0};
};

// kappa = 1 / max(1 - beta*s, clamp_eps); counts when the clamp engages.
double eval_kappa(double beta, double s, double clamp_eps, ClampCounter* clamps = nullptr);

// F(xi) = xi / (1 - beta*|xi|); requires beta*|xi| < 1.
StrainTensor constitutive_stress(const StrainTensor& xi, double beta);

// E = T / (1 + beta*|T|); always defined, |E| < 1/beta.
StrainTensor inverse_strain(const StrainTensor& T, double beta);

// Constant symmetric gradient of the P1 interpolant on triangle t.
StrainTensor element_strain(const FineMesh& mesh, const DisplacementField& u, int t);

// Per-triangle kappa(x, |Du|) for a full displacement field.
std::vector<double> kappa_field(const FineMesh& mesh, const BetaField& beta,
                                const DisplacementField& u, double clamp_eps,
                                ClampCounter* clamps = nullptr,
                                const ExecPolicy& ex = {});

// ---- beta field construction ----

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct CoefficientSpec {
  enum class Kind { Constant, Channels, Raster } kind = Kind::Constant;
  double value = 1.0;          // Constant
  double background = 1.0;     // Channels
  double channel_value = 1.0;  // Channels
  std::vector<Rect> rects;     // Channels
  std::string raster_path;     // Raster

  static CoefficientSpec constant(double v);
  static CoefficientSpec channels(double background, double channel_value, std::vector<Rect> rects);
  static CoefficientSpec raster(std::string path);
  // Built-in channelized presets (artifact-defined geometry).
  static CoefficientSpec model1_like(double channel_value);
  static CoefficientSpec model2_like(double channel_value);
};

// Per-triangle beta by centroid lookup. Raster: text file "rows cols" then
// rows*cols positive values, row-major from the bottom row of cells; both
// triangles of a cell share the cell value.
BetaField build_beta_field(const FineMesh& mesh, const CoefficientSpec& spec);

} // namespace slfem
