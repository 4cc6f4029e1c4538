#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cavi/error.hpp"

namespace cavi {

/// Uniform 1-D grid lo = x_0 < ... < x_{n-1} = hi.
class GridSpec {
 public:
  static constexpr std::size_t kMinNodes = 16;

  GridSpec(double lo, double hi, std::size_t n_nodes);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t size() const noexcept { return n_; }
  double step() const noexcept { return step_; }
  double node(std::size_t k) const noexcept {
    return k + 1 == n_ ? hi_ : lo_ + static_cast<double>(k) * step_;
  }
  std::vector<double> nodes() const;

  bool operator==(const GridSpec&) const = default;

 private:
  double lo_;
  double hi_;
  std::size_t n_;
  double step_;
};

enum class BoundaryCheck { Enforce, Skip };

/// Ratio (end-node density / max density) above which the support is taken
/// to have escaped the window.
inline constexpr double kBoundaryMassRatio = 1e-8;

/// Normalized density of one scalar block sampled on a uniform grid.
/// Integrals use the composite trapezoid rule throughout.
class GridMarginal {
 public:
  /// Normalizes exp(logf) by max-shift then trapezoid integration.
  static GridMarginal from_log_density(const GridSpec& spec, std::span<const double> logf,
                                       BoundaryCheck check = BoundaryCheck::Enforce);

  /// Adopts an already-normalized density as given (no renormalization), so a
  /// serialized state reloads bit-for-bit.
  static GridMarginal from_density(const GridSpec& spec, std::vector<double> density);

  /// N(mean, sd^2) sampled on `spec`.
  static GridMarginal gaussian(const GridSpec& spec, double mean, double sd,
                               BoundaryCheck check = BoundaryCheck::Enforce);

  const GridSpec& spec() const noexcept { return spec_; }
  std::span<const double> density() const noexcept { return density_; }
  std::span<const double> log_density() const noexcept { return log_density_; }

  /// ∫ μ log μ (negative differential entropy).
  double entropy() const;
  /// ∫ |x|^q μ(dx).
  double moment(int q) const;
  double mean() const;
  double variance() const;
  /// ∫ f dμ by trapezoid over the nodes.
  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    const std::size_t n = spec_.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
      if (density_[k] != 0.0) s += w * density_[k] * f(spec_.node(k));
    }
    return s * spec_.step();
  }

  /// Trapezoid CDF at the nodes; cdf()[0] = 0, cdf().back() = 1.
  std::span<const double> cdf() const noexcept { return cdf_; }
  /// Piecewise-linear inverse of the node CDF, u in (0, 1).
  double quantile(double u) const;
  /// Piecewise-linear interpolation of the node CDF.
  double cdf_at(double x) const;

  /// End-node density relative to the peak.
  double boundary_ratio() const;
  double max_density() const;

 private:
  GridMarginal(GridSpec spec, std::vector<double> density, std::vector<double> log_density);
  void build_cdf();

  GridSpec spec_;
  std::vector<double> density_;
  std::vector<double> log_density_;
  std::vector<double> cdf_;
};

/// μ = μ^1 ⊗ ... ⊗ μ^d.
struct ProductState {
  std::vector<GridMarginal> marginals;

  std::size_t dim() const noexcept { return marginals.size(); }
  const GridMarginal& operator[](std::size_t i) const { return marginals.at(i); }
  std::vector<double> means() const;
  std::vector<double> variances() const;
  double second_moment() const;
};

/// Number of Gauss-Legendre nodes used for the quantile integral.
inline constexpr std::size_t kQuantileQuadratureNodes = 512;

/// W2 between 1-D laws via the comonotone coupling,
/// sqrt(∫_0^1 |Q_a(u) - Q_b(u)|^2 du).
double w2_1d(const GridMarginal& a, const GridMarginal& b);

/// sqrt(Σ_i W2(a_i, b_i)^2); W2 tensorizes over product measures.
double w2_product(const ProductState& a, const ProductState& b);

/// Nodes and weights of the n-point Gauss-Legendre rule on (0, 1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& gauss_legendre_unit(std::size_t n);

/// Composite trapezoid integral of node values.
double trapezoid(const GridSpec& spec, std::span<const double> values);

}  // namespace cavi
