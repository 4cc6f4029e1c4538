#include "cavi/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

namespace cavi {

GridSpec::GridSpec(double lo, double hi, std::size_t n_nodes) : lo_(lo), hi_(hi), n_(n_nodes) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw Error(ErrorCode::InvalidGrid, "grid needs finite lo < hi");
  }
  if (n_nodes < kMinNodes) {
    throw Error(ErrorCode::InvalidGrid, "grid needs at least " + std::to_string(kMinNodes) + " nodes");
  }
  step_ = (hi - lo) / static_cast<double>(n_nodes - 1);
  if (!(step_ > 0.0)) throw Error(ErrorCode::InvalidGrid, "grid spacing underflows");
}

std::vector<double> GridSpec::nodes() const {
  std::vector<double> x(n_);
  for (std::size_t k = 0; k < n_; ++k) x[k] = node(k);
  return x;
}

double trapezoid(const GridSpec& spec, std::span<const double> values) {
  const std::size_t n = values.size();
  double s = 0.5 * (values.front() + values.back());
  for (std::size_t k = 1; k + 1 < n; ++k) s += values[k];
  return s * spec.step();
}

GridMarginal::GridMarginal(GridSpec spec, std::vector<double> density,
                           std::vector<double> log_density)
    : spec_(spec), density_(std::move(density)), log_density_(std::move(log_density)) {
  build_cdf();
}

GridMarginal GridMarginal::from_log_density(const GridSpec& spec, std::span<const double> logf,
                                            BoundaryCheck check) {
  if (logf.size() != spec.size()) {
    throw Error(ErrorCode::DimensionMismatch, "log density length differs from grid size");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logf) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteLogDensity, "log density is not finite");
    top = std::max(top, v);
  }
  std::vector<double> shifted(logf.size());
  for (std::size_t k = 0; k < logf.size(); ++k) shifted[k] = std::exp(logf[k] - top);
  const double log_z = std::log(trapezoid(spec, shifted));

  std::vector<double> log_density(logf.size());
  std::vector<double> density(logf.size());
  for (std::size_t k = 0; k < logf.size(); ++k) {
    log_density[k] = logf[k] - top - log_z;
    density[k] = std::exp(log_density[k]);
  }
  GridMarginal mu(spec, std::move(density), std::move(log_density));
  if (check == BoundaryCheck::Enforce && mu.boundary_ratio() >= kBoundaryMassRatio) {
    throw Error(ErrorCode::BoundaryMass, "support reaches the grid window [" +
                                             std::to_string(spec.lo()) + ", " +
                                             std::to_string(spec.hi()) + "]");
  }
  return mu;
}

GridMarginal GridMarginal::from_density(const GridSpec& spec, std::vector<double> density) {
  if (density.size() != spec.size()) {
    throw Error(ErrorCode::DimensionMismatch, "density length differs from grid size");
  }
  std::vector<double> log_density(density.size());
  for (std::size_t k = 0; k < density.size(); ++k) {
    if (!std::isfinite(density[k]) || density[k] < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "density must be finite and non-negative");
    }
    log_density[k] = std::log(density[k]);
  }
  const double mass = trapezoid(spec, density);
  if (std::abs(mass - 1.0) > 1e-9) {
    throw Error(ErrorCode::NotNormalized, "density integrates to " + std::to_string(mass));
  }
  return GridMarginal(spec, std::move(density), std::move(log_density));
}

GridMarginal GridMarginal::gaussian(const GridSpec& spec, double mean, double sd,
                                    BoundaryCheck check) {
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian needs finite mean and sd > 0");
  }
  std::vector<double> logf(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double z = (spec.node(k) - mean) / sd;
    logf[k] = -0.5 * z * z;
  }
  return from_log_density(spec, logf, check);
}

void GridMarginal::build_cdf() {
  const std::size_t n = spec_.size();
  cdf_.assign(n, 0.0);
  const double half_step = 0.5 * spec_.step();
  for (std::size_t k = 1; k < n; ++k) {
    cdf_[k] = cdf_[k - 1] + half_step * (density_[k - 1] + density_[k]);
  }
  // Remove the O(1e-16) normalization drift so the CDF ends exactly at 1.
  const double total = cdf_.back();
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

double GridMarginal::entropy() const {
  const std::size_t n = spec_.size();
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (density_[k] < 1e-300) continue;
    const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
    s += w * density_[k] * log_density_[k];
  }
  return s * spec_.step();
}

double GridMarginal::moment(int q) const {
  if (q < 0) throw Error(ErrorCode::InvalidArgument, "moment order must be >= 0");
  if (q == 0) return expect([](double) { return 1.0; });
  if (q == 1) return expect([](double x) { return std::abs(x); });
  if (q == 2) return expect([](double x) { return x * x; });
  return expect([q](double x) { return std::pow(std::abs(x), q); });
}

double GridMarginal::mean() const {
  return expect([](double x) { return x; });
}

double GridMarginal::variance() const {
  const double m = mean();
  return expect([m](double x) { return (x - m) * (x - m); });
}

double GridMarginal::max_density() const {
  return *std::max_element(density_.begin(), density_.end());
}

double GridMarginal::boundary_ratio() const {
  return std::max(density_.front(), density_.back()) / max_density();
}

double GridMarginal::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) {
    throw Error(ErrorCode::UOutOfRange, "quantile level must lie in (0, 1)");
  }
  // First node with CDF > u; the segment before it has strictly rising CDF.
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return spec_.hi();
  const auto k = static_cast<std::size_t>(it - cdf_.begin());
  if (k == 0) return spec_.lo();
  const double c0 = cdf_[k - 1];
  const double c1 = cdf_[k];
  return spec_.node(k - 1) + (u - c0) / (c1 - c0) * spec_.step();
}

double GridMarginal::cdf_at(double x) const {
  if (x <= spec_.lo()) return 0.0;
  if (x >= spec_.hi()) return 1.0;
  const double t = (x - spec_.lo()) / spec_.step();
  const auto k = std::min(static_cast<std::size_t>(t), spec_.size() - 2);
  const double frac = t - static_cast<double>(k);
  return cdf_[k] + frac * (cdf_[k + 1] - cdf_[k]);
}

std::vector<double> ProductState::means() const {
  std::vector<double> m;
  m.reserve(marginals.size());
  for (const auto& mu : marginals) m.push_back(mu.mean());
  return m;
}

std::vector<double> ProductState::variances() const {
  std::vector<double> v;
  v.reserve(marginals.size());
  for (const auto& mu : marginals) v.push_back(mu.variance());
  return v;
}

double ProductState::second_moment() const {
  double s = 0.0;
  for (const auto& mu : marginals) s += mu.moment(2);
  return s;
}

namespace {

QuadratureRule build_gauss_legendre(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // Newton iteration on P_n from the Chebyshev-like initial guess; symmetric
  // pairs are filled together.
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // Map [-1, 1] to (0, 1); nodes ascending.
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre_unit(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, QuadratureRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_gauss_legendre(n)).first;
  return it->second;
}

double w2_1d(const GridMarginal& a, const GridMarginal& b) {
  const auto& rule = gauss_legendre_unit(kQuantileQuadratureNodes);
  double s = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double diff = a.quantile(rule.nodes[q]) - b.quantile(rule.nodes[q]);
    s += rule.weights[q] * diff * diff;
  }
  return std::sqrt(s);
}

double w2_product(const ProductState& a, const ProductState& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "product states differ in dimension");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double w = w2_1d(a.marginals[i], b.marginals[i]);
    s += w * w;
  }
  return std::sqrt(s);
}

}  // namespace cavi
