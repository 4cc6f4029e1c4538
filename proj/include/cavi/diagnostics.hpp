#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "cavi/marginal.hpp"
#include "cavi/potential.hpp"
#include "cavi/report.hpp"

namespace cavi {

/// F(μ) = ∫ψ dμ + Σ_i h(μ^i) = H(μ‖ρ) + log Z.
double free_energy(const ProductState& state, const Potential& p);
double free_energy(const GaussianState& state, const Potential& p);

/// F(μ) without the potential's additive constant. Differences of these are
/// the gaps reported everywhere, so shifting ψ leaves them bit-identical.
double free_energy_unshifted(const ProductState& state, const Potential& p);
double free_energy_unshifted(const GaussianState& state, const Potential& p);

/// Nodes with density below this fraction of the peak are ignored by the
/// residual.
inline constexpr double kResidualSupportRatio = 1e-12;

/// max_i sup_x |log μ^i(x) + f_i(x) - c_i| over the support of μ^i, with c_i the
/// median of the bracket and f_i integrated against the other marginals of
/// the same state. Zero exactly at solutions of the mean-field equation.
double mean_field_residual(const ProductState& state, const Potential& p);
/// Same quantity for a Gaussian state. The bracket is a quadratic in x (linear
/// once the variances are 1/a_ii), sampled over |x - mean_i| <= sqrt(2 log(1e12) v_i).
double mean_field_residual(const GaussianState& state, const Potential& p);

/// W2 between product Gaussians.
double w2_gaussian(const GaussianState& a, const GaussianState& b);

enum class CertificateKind { Monotone, LinearRate, ExponentialRate, GaussianDimFree, W2LowerBound };

std::string_view to_string(CertificateKind k);
/// Accepts the CLI spellings: monotone, linear, exponential, gaussian-dimfree, w2lower.
CertificateKind certificate_kind_from_string(std::string_view s);

/// Allowed excess of observed over bound: absolute + relative * |bound|.
struct Slack {
  double absolute = 1e-7;
  double relative = 1e-3;

  double at(double bound) const { return absolute + relative * std::abs(bound); }
  /// Defaults, with the absolute part taken from CAVI_MF_SLACK when set.
  static Slack from_environment();
};

struct CertificateConstants {
  std::size_t d = 0;
  std::optional<double> lambda;
  std::optional<double> lipschitz;

  static CertificateConstants of(const PotentialSummary& s);
};

struct CertificateRow {
  int n = 0;
  double bound = 0.0;
  double observed = 0.0;
  double slack = 0.0;
  /// Linear-rate bound with R taken from the diameter estimate, when available.
  std::optional<double> alt_bound;
};

struct Certificate {
  CertificateKind kind = CertificateKind::Monotone;
  CertificateConstants constants;
  /// Per-sweep contraction factor (exponential kinds).
  std::optional<double> factor;
  /// Diameter used by the linear rate: max over recorded sweeps n >= 1.
  std::optional<double> radius;
  /// Closed-form diameter bound, when it can be evaluated.
  std::optional<double> radius_bound;
  std::optional<double> gap1;
  Slack slack;
  std::vector<CertificateRow> rows;
  bool pass = false;
  double max_violation = 0.0;
  /// First sweep whose row fails.
  std::optional<int> violating_sweep;
};

/// Checks one convergence inequality against a run. Rows start at sweep 1;
/// sweep 0 is the initialization.
///   Monotone        gap_n <= gap_{n-1}
///   LinearRate      gap_n <= (2 + gap_1 + 1/(R sqrt(L d))) 2 R^2 L d / n
///   ExponentialRate gap_n <= (1 - λ²/(L² d + λ²))^{n-1} gap_1
///   W2LowerBound    (λ/2) W2²(μ_n, μ_*) <= gap_n
///   GaussianDimFree ψ(m_n) <= (1 - λ²/(λ² + 64 (L-λ)² log² 3))^{n-1} ψ(m_1)
Certificate rate_certificate(const RunReport& report, CertificateKind kind,
                             const CertificateConstants& constants, Slack slack = {});

/// As above, after re-anchoring gaps and W2 distances on an explicit μ_*.
Certificate rate_certificate(const RunReport& report, CertificateKind kind, const Potential& p,
                             const ProductState& mu_star, Slack slack = {});
Certificate rate_certificate(const RunReport& report, CertificateKind kind, const Potential& p,
                             const GaussianState& mu_star, Slack slack = {});

struct GapRow {
  int n = 0;
  double gap = 0.0;
  double w2 = 0.0;
};

/// (n, F(μ_n) - F(μ_*), W2(μ_n, μ_*)) for every stored sweep.
std::vector<GapRow> gap_series(const RunReport& report);
std::vector<GapRow> gap_series(const RunReport& report, const ProductState& mu_star,
                               const Potential& p);
std::vector<GapRow> gap_series(const RunReport& report, const GaussianState& mu_star,
                               const Potential& p);

/// Rewrites every record's gap and w2_star against `mu_star` (states required).
void anchor_report(RunReport& report, const ProductState& mu_star, const Potential& p,
                   ReferenceSource source);
void anchor_report(RunReport& report, const GaussianState& mu_star, const Potential& p,
                   ReferenceSource source);

/// Envelope ψ >= α + β|x|; falls back to the potential's envelope when unset.
struct DiameterGeneral {
  std::optional<Envelope> envelope;
};
/// ρ satisfies W2²(μ, ρ) <= 2 r H(μ‖ρ); r defaults to 1/λ.
struct DiameterTalagrand {
  std::optional<double> r;
};
struct DiameterSubgaussian {
  double r = 1.0;
  /// log ∫ exp(r |x|²) ρ(dx).
  double log_mgf = 0.0;
};
using DiameterVariant = std::variant<DiameterGeneral, DiameterTalagrand, DiameterSubgaussian>;

/// Bound on R = sup_n W2(μ_n, μ_*) in terms of H(μ_1‖ρ) = F1 + log Z.
double diameter_bound(const Potential& p, double F1, const DiameterVariant& variant);
/// Same, from H(μ_1‖ρ) directly; `d` is the number of scalar blocks and the
/// variant must be fully specified.
double diameter_bound_from_entropy(double relative_entropy, std::size_t d,
                                   const DiameterVariant& variant);

}  // namespace cavi
