#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "cavi/marginal.hpp"
#include "cavi/potential.hpp"
#include "cavi/report.hpp"

namespace cavi {

struct SweepSchedule {
  SweepMode mode = SweepMode::Sequential;
  int sweeps = 200;
  /// Stop once the mean-field residual falls below this.
  double tol = 1e-8;
  /// Record F after every coordinate update (sequential grid runs only).
  bool track_half_sweeps = true;
  /// Keep every sweep's state in the report.
  bool keep_states = true;

  void validate() const;
};

struct GridOptions {
  std::size_t n_nodes = 2048;
  /// Window half-width in standard deviations when a grid is refit.
  double window_sds = 12.0;
  int max_resizes = 5;
};

/// Total second moment above which a parallel run is declared divergent.
inline constexpr double kDivergenceMoment = 1e6;

/// New marginal for block i: normalized exp(-f_i) with f_i integrated against
/// the other marginals of `state`. Computed on the current grid of block i;
/// the window is refit when the support escapes it or occupies a small
/// fraction of it.
GridMarginal cavi_update_coordinate(const ProductState& state, const Potential& p, std::size_t i,
                                    const GridOptions& opts = {});

/// One sequential sweep, blocks 0..d-1; block i sees the already-updated
/// blocks < i. When `half_sweep_free_energy` is given, F is appended after
/// each coordinate update.
ProductState cavi_sweep(const ProductState& state, const Potential& p,
                        const GridOptions& opts = {},
                        std::vector<double>* half_sweep_free_energy = nullptr);

/// Jacobi-style sweep: every block integrates against the old state.
ProductState parallel_sweep(const ProductState& state, const Potential& p,
                            const GridOptions& opts = {});

/// Exact CAVI sweep for psi = (x - m)^T A (x - m) / 2: Gauss-Seidel on the
/// means, variances 1 / a_ii.
GaussianState gaussian_sweep(const GaussianState& g, const Eigen::MatrixXd& A,
                             const Eigen::VectorXd& m);
/// Jacobi counterpart of gaussian_sweep.
GaussianState gaussian_parallel_sweep(const GaussianState& g, const Eigen::MatrixXd& A,
                                      const Eigen::VectorXd& m);

struct InitSpec {
  enum class Kind { StandardGaussian, NarrowAtPoint, FromFile };
  Kind kind = Kind::StandardGaussian;
  std::vector<double> point;
  std::string path;

  static InitSpec standard_gaussian() { return {}; }
  static InitSpec narrow_at(std::vector<double> x) {
    return {Kind::NarrowAtPoint, std::move(x), {}};
  }
  static InitSpec from_file(std::string path) { return {Kind::FromFile, {}, std::move(path)}; }
};

/// Half-width of the window used by the built-in initial states.
inline constexpr double kInitHalfWidth = 12.0;

/// Standard deviation of the narrow surrogate for a point mass: five cells of
/// the initial grid.
double narrow_init_sd(const GridOptions& opts);

ProductState init_state(const Potential& p, const InitSpec& init, const GridOptions& opts = {});
/// Gaussian-backend counterpart; FromFile uses the means and variances of the
/// stored grid state.
GaussianState init_gaussian_state(const Potential& p, const InitSpec& init,
                                  const GridOptions& opts = {});

/// μ_* = N(m, (A ⊙ I)^{-1}) for a quadratic potential.
GaussianState quadratic_optimum(const Potential& p);
/// Grid rendering of a Gaussian state, windows mean ± window_sds · sd.
ProductState to_grid(const GaussianState& g, const GridOptions& opts = {});

/// Iterate sweeps until the mean-field residual drops below sched.tol (at
/// least two sweeps are run), the sweep budget is spent, or a parallel run
/// diverges. Gaps and W2 distances to μ_* are filled in afterwards, with μ_*
/// the analytic optimum for quadratic targets and the final state otherwise.
RunReport solve(const Potential& p, const ProductState& init, const SweepSchedule& sched,
                const GridOptions& opts = {});
RunReport solve(const Potential& p, const GaussianState& init, const SweepSchedule& sched);

}  // namespace cavi
