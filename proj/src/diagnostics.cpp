#include "cavi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>

#include "cavi/engine.hpp"
#include "cavi/field.hpp"

namespace cavi {

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

void require_quadratic(const Potential& p) {
  if (!p.is_quadratic()) {
    throw Error(ErrorCode::BackendMismatch, "gaussian states need a quadratic potential");
  }
}

void require_matching(const GaussianState& g, const Potential& p) {
  if (g.dim() != p.dim() || g.variances.size() != g.means.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gaussian state does not match the potential");
  }
}

// ½ (a - m)^T A (a - m) - ½ (b - m)^T A (b - m), evaluated as ½ (a - b)^T A (a + b - 2m)
// so that it is exactly ψ(a) when b = m.
double quadratic_difference(const Potential& p, const std::vector<double>& a,
                            const std::vector<double>& b) {
  const auto& A = p.precision();
  const auto& m = p.mean();
  const auto d = static_cast<Eigen::Index>(a.size());
  Eigen::VectorXd ra(d), rb(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    ra(i) = a[static_cast<std::size_t>(i)] - m(i);
    rb(i) = b[static_cast<std::size_t>(i)] - m(i);
  }
  return 0.5 * ra.dot(A * ra) - 0.5 * rb.dot(A * rb);
}

// F(a) - F(b) for product Gaussians under a quadratic potential.
double gaussian_gap(const GaussianState& a, const GaussianState& b, const Potential& p) {
  const auto& A = p.precision();
  double gap = quadratic_difference(p, a.means, b.means);
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (a.variances[i] == b.variances[i]) continue;
    gap += 0.5 * A(ii, ii) * (a.variances[i] - b.variances[i]) -
           0.5 * std::log(a.variances[i] / b.variances[i]);
  }
  return gap;
}

}  // namespace

double free_energy_unshifted(const ProductState& state, const Potential& p) {
  if (state.dim() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state dimension differs from the potential");
  }
  std::vector<double> means(state.dim());
  double total = 0.0;
  for (std::size_t i = 0; i < state.dim(); ++i) {
    const GridMarginal& mu = state.marginals[i];
    const auto& phi = p.unaries()[i].value;
    total += mu.expect([&](double x) { return phi(x); }) + mu.entropy();
    means[i] = mu.mean();
  }
  for (const PairTerm& t : p.pairs()) {
    if (t.bilinear) {
      const auto& b = *t.bilinear;
      total += b.coefficient * (means[t.i] - b.offset_i) * (means[t.j] - b.offset_j);
    } else {
      const GridMarginal& mi = state.marginals[t.i];
      const GridMarginal& mj = state.marginals[t.j];
      total += mi.expect([&](double x) { return mj.expect([&](double y) { return t.value(x, y); }); });
    }
  }
  if (!std::isfinite(total)) throw Error(ErrorCode::NonFiniteIntegrand, "free energy is not finite");
  return total;
}

double free_energy(const ProductState& state, const Potential& p) {
  return free_energy_unshifted(state, p) + p.constant();
}

double free_energy_unshifted(const GaussianState& g, const Potential& p) {
  require_quadratic(p);
  require_matching(g, p);
  const auto& A = p.precision();
  double total = quadratic_difference(p, g.means, std::vector<double>(p.mean().begin(), p.mean().end()));
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    total += 0.5 * A(ii, ii) * g.variances[i] -
             0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * g.variances[i]);
  }
  return total;
}

double free_energy(const GaussianState& g, const Potential& p) {
  return free_energy_unshifted(g, p) + p.constant();
}

double mean_field_residual(const ProductState& state, const Potential& p) {
  if (state.dim() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state dimension differs from the potential");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < state.dim(); ++i) {
    const GridMarginal& mu = state.marginals[i];
    const std::vector<double> f = CoordinateField(p, state, i).on_grid(mu.spec());
    const double floor = kResidualSupportRatio * mu.max_density();
    std::vector<double> bracket;
    bracket.reserve(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (mu.density()[k] > floor) bracket.push_back(mu.log_density()[k] + f[k]);
    }
    const double c = median(bracket);
    for (double b : bracket) worst = std::max(worst, std::abs(b - c));
  }
  return worst;
}

double mean_field_residual(const GaussianState& g, const Potential& p) {
  require_quadratic(p);
  require_matching(g, p);
  const auto& A = p.precision();
  const auto& m = p.mean();
  // log μ^i + f_i is a quadratic in x; sample it over the support the grid
  // residual would see, |x - mean| <= sqrt(2 log(1e12) variance).
  constexpr std::size_t kSamples = 4097;
  const double support = std::sqrt(-2.0 * std::log(kResidualSupportRatio));
  double worst = 0.0;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double slope = 0.0;
    for (std::size_t j = 0; j < g.dim(); ++j) {
      slope += A(ii, static_cast<Eigen::Index>(j)) * (g.means[j] - m(static_cast<Eigen::Index>(j)));
    }
    const double curvature = 0.5 * (A(ii, ii) - 1.0 / g.variances[i]);
    const double half_width = support * std::sqrt(g.variances[i]);
    std::vector<double> bracket(kSamples);
    for (std::size_t k = 0; k < kSamples; ++k) {
      const double t = half_width * (2.0 * static_cast<double>(k) / (kSamples - 1) - 1.0);
      bracket[k] = curvature * t * t + slope * t;
    }
    const double c = median(bracket);
    for (double b : bracket) worst = std::max(worst, std::abs(b - c));
  }
  return worst;
}

double w2_gaussian(const GaussianState& a, const GaussianState& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "gaussian states differ in dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double dm = a.means[i] - b.means[i];
    const double ds = std::sqrt(a.variances[i]) - std::sqrt(b.variances[i]);
    s += dm * dm + ds * ds;
  }
  return std::sqrt(s);
}

std::string_view to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::Monotone: return "monotone";
    case CertificateKind::LinearRate: return "linear";
    case CertificateKind::ExponentialRate: return "exponential";
    case CertificateKind::GaussianDimFree: return "gaussian-dimfree";
    case CertificateKind::W2LowerBound: return "w2lower";
  }
  return "unknown";
}

CertificateKind certificate_kind_from_string(std::string_view s) {
  for (auto k : {CertificateKind::Monotone, CertificateKind::LinearRate,
                 CertificateKind::ExponentialRate, CertificateKind::GaussianDimFree,
                 CertificateKind::W2LowerBound}) {
    if (s == to_string(k)) return k;
  }
  throw Error(ErrorCode::ParseError, "unknown certificate kind '" + std::string(s) + "'");
}

Slack Slack::from_environment() {
  Slack s;
  if (const char* env = std::getenv("CAVI_MF_SLACK")) {
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end == env || *end != '\0' || !std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::ParseError, "CAVI_MF_SLACK must be a non-negative number");
    }
    s.absolute = v;
  }
  return s;
}

CertificateConstants CertificateConstants::of(const PotentialSummary& s) {
  CertificateConstants c;
  c.d = s.d;
  c.lambda = s.lambda;
  c.lipschitz = s.lipschitz;
  return c;
}

namespace {

double require_lambda(const CertificateConstants& c, CertificateKind kind) {
  if (!c.lambda || !(*c.lambda > 0.0)) {
    throw Error(ErrorCode::MissingConstants,
                std::string(to_string(kind)) + " certificate needs lambda > 0");
  }
  return *c.lambda;
}

double require_lipschitz(const CertificateConstants& c, CertificateKind kind) {
  if (!c.lipschitz || !(*c.lipschitz > 0.0)) {
    throw Error(ErrorCode::MissingConstants,
                std::string(to_string(kind)) + " certificate needs the Lipschitz constant L");
  }
  return *c.lipschitz;
}

}  // namespace

Certificate rate_certificate(const RunReport& report, CertificateKind kind,
                             const CertificateConstants& constants, Slack slack) {
  if (report.records.size() < 2 || report.records.front().sweep != 0) {
    throw Error(ErrorCode::InvalidArgument, "certificate needs the initial record and at least one sweep");
  }
  if (kind == CertificateKind::GaussianDimFree && report.backend != Backend::Gaussian) {
    throw Error(ErrorCode::BackendMismatch, "gaussian-dimfree applies to gaussian-backend runs only");
  }

  Certificate cert;
  cert.kind = kind;
  cert.constants = constants;
  cert.slack = slack;
  const auto& rec = report.records;
  const double gap1 = rec[1].gap;
  cert.gap1 = gap1;
  const double d = static_cast<double>(constants.d);

  auto add_row = [&](int n, double bound, double observed) {
    cert.rows.push_back({n, bound, observed, slack.at(bound), std::nullopt});
  };

  switch (kind) {
    case CertificateKind::Monotone:
      for (std::size_t k = 1; k < rec.size(); ++k) add_row(rec[k].sweep, rec[k - 1].gap, rec[k].gap);
      break;

    case CertificateKind::LinearRate: {
      const double L = require_lipschitz(constants, kind);
      double R = 0.0;
      for (std::size_t k = 1; k < rec.size(); ++k) R = std::max(R, rec[k].w2_star);
      cert.radius = R;
      // (2 + gap1 + 1/(R sqrt(Ld))) 2R²Ld/n, expanded so that R = 0 is allowed.
      auto bound_with = [&](double radius, int n) {
        return ((2.0 + gap1) * 2.0 * radius * radius * L * d + 2.0 * radius * std::sqrt(L * d)) /
               static_cast<double>(n);
      };
      if (constants.lambda && *constants.lambda > 0.0 && report.potential.log_partition_unshifted) {
        const double h1 = gap1 + report.reference_free_energy + *report.potential.log_partition_unshifted;
        cert.radius_bound = diameter_bound_from_entropy(h1, constants.d,
                                                        DiameterTalagrand{1.0 / *constants.lambda});
      }
      for (std::size_t k = 1; k < rec.size(); ++k) {
        add_row(rec[k].sweep, bound_with(R, rec[k].sweep), rec[k].gap);
        if (cert.radius_bound) cert.rows.back().alt_bound = bound_with(*cert.radius_bound, rec[k].sweep);
      }
      break;
    }

    case CertificateKind::ExponentialRate: {
      const double lambda = require_lambda(constants, kind);
      const double L = require_lipschitz(constants, kind);
      const double factor = 1.0 - lambda * lambda / (L * L * d + lambda * lambda);
      cert.factor = factor;
      for (std::size_t k = 1; k < rec.size(); ++k) {
        add_row(rec[k].sweep, std::pow(factor, rec[k].sweep - 1) * gap1, rec[k].gap);
      }
      break;
    }

    case CertificateKind::W2LowerBound: {
      const double lambda = require_lambda(constants, kind);
      for (std::size_t k = 1; k < rec.size(); ++k) {
        add_row(rec[k].sweep, rec[k].gap, 0.5 * lambda * rec[k].w2_star * rec[k].w2_star);
      }
      break;
    }

    case CertificateKind::GaussianDimFree: {
      const double lambda = require_lambda(constants, kind);
      const double L = require_lipschitz(constants, kind);
      const double log3 = std::log(3.0);
      const double factor =
          1.0 - lambda * lambda / (lambda * lambda + 64.0 * (L - lambda) * (L - lambda) * log3 * log3);
      cert.factor = factor;
      for (std::size_t k = 1; k < rec.size(); ++k) {
        add_row(rec[k].sweep, std::pow(factor, rec[k].sweep - 1) * gap1, rec[k].gap);
      }
      break;
    }
  }

  cert.pass = true;
  cert.max_violation = -std::numeric_limits<double>::infinity();
  for (const auto& row : cert.rows) {
    const double excess = row.observed - row.bound;
    cert.max_violation = std::max(cert.max_violation, excess);
    if (!(excess <= row.slack)) {
      if (cert.pass) cert.violating_sweep = row.n;
      cert.pass = false;
    }
  }
  return cert;
}

Certificate rate_certificate(const RunReport& report, CertificateKind kind, const Potential& p,
                             const ProductState& mu_star, Slack slack) {
  RunReport anchored = report;
  anchor_report(anchored, mu_star, p, ReferenceSource::External);
  return rate_certificate(anchored, kind, CertificateConstants::of(anchored.potential), slack);
}

Certificate rate_certificate(const RunReport& report, CertificateKind kind, const Potential& p,
                             const GaussianState& mu_star, Slack slack) {
  RunReport anchored = report;
  anchor_report(anchored, mu_star, p, ReferenceSource::External);
  return rate_certificate(anchored, kind, CertificateConstants::of(anchored.potential), slack);
}

void anchor_report(RunReport& report, const ProductState& mu_star, const Potential& p,
                   ReferenceSource source) {
  if (report.backend != Backend::Grid) {
    throw Error(ErrorCode::BackendMismatch, "grid reference for a gaussian-backend report");
  }
  if (report.states.size() != report.records.size()) {
    throw Error(ErrorCode::InvalidArgument, "report does not hold a state for every sweep");
  }
  const double reference = free_energy_unshifted(mu_star, p);
  for (std::size_t k = 0; k < report.records.size(); ++k) {
    report.records[k].gap = free_energy_unshifted(report.states[k], p) - reference;
    report.records[k].w2_star = w2_product(report.states[k], mu_star);
  }
  report.reference = source;
  report.reference_free_energy = reference;
}

void anchor_report(RunReport& report, const GaussianState& mu_star, const Potential& p,
                   ReferenceSource source) {
  if (report.backend != Backend::Gaussian) {
    throw Error(ErrorCode::BackendMismatch, "gaussian reference for a grid-backend report");
  }
  if (report.gaussian_states.size() != report.records.size()) {
    throw Error(ErrorCode::InvalidArgument, "report does not hold a state for every sweep");
  }
  for (std::size_t k = 0; k < report.records.size(); ++k) {
    report.records[k].gap = gaussian_gap(report.gaussian_states[k], mu_star, p);
    report.records[k].w2_star = w2_gaussian(report.gaussian_states[k], mu_star);
  }
  report.reference = source;
  report.reference_free_energy = free_energy_unshifted(mu_star, p);
}

std::vector<GapRow> gap_series(const RunReport& report) {
  std::vector<GapRow> rows;
  rows.reserve(report.records.size());
  for (const auto& r : report.records) rows.push_back({r.sweep, r.gap, r.w2_star});
  return rows;
}

std::vector<GapRow> gap_series(const RunReport& report, const ProductState& mu_star,
                               const Potential& p) {
  RunReport anchored = report;
  anchor_report(anchored, mu_star, p, ReferenceSource::External);
  return gap_series(anchored);
}

std::vector<GapRow> gap_series(const RunReport& report, const GaussianState& mu_star,
                               const Potential& p) {
  RunReport anchored = report;
  anchor_report(anchored, mu_star, p, ReferenceSource::External);
  return gap_series(anchored);
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

double diameter_bound_from_entropy(double relative_entropy, std::size_t d,
                                   const DiameterVariant& variant) {
  const double h = std::max(relative_entropy, 0.0);
  return std::visit(
      Overloaded{
          [&](const DiameterTalagrand& v) {
            if (!v.r || !(*v.r > 0.0)) throw Error(ErrorCode::MissingConstants, "Talagrand constant r missing");
            return 2.0 * std::sqrt(2.0 * *v.r * h);
          },
          [&](const DiameterSubgaussian& v) {
            if (!(v.r > 0.0)) throw Error(ErrorCode::InvalidArgument, "subgaussian r must be positive");
            return 2.0 / std::sqrt(v.r) * std::sqrt(std::max(h + v.log_mgf, 0.0));
          },
          [&](const DiameterGeneral& v) {
            if (!v.envelope) throw Error(ErrorCode::MissingEnvelope, "general diameter bound needs (alpha, beta)");
            const double alpha = v.envelope->alpha;
            const double beta = v.envelope->beta;
            const double k = static_cast<double>(d);
            // ∫_{R^k} exp(-(β|x| + α)/2) dx = e^{-α/2} |S^{k-1}| Γ(k) (2/β)^k
            const double log_sphere =
                std::log(2.0) + 0.5 * k * std::log(std::numbers::pi) - std::lgamma(0.5 * k);
            const double log_i1 = -0.5 * alpha + log_sphere + std::lgamma(k) + k * std::log(2.0 / beta);
            // ∫ |x|² exp(-β Σ|x_i|) dx = k (4/β³) (2/β)^{k-1}
            const double log_i2 = std::log(k) + std::log(4.0 / (beta * beta * beta)) +
                                  (k - 1.0) * std::log(2.0 / beta);
            const double log_r = std::log(2.0) + 0.5 * (2.0 * k + 1.0) * h - 0.5 * (k + 1.0) * alpha +
                                 k * log_i1 + 0.5 * log_i2;
            return std::exp(log_r);
          },
      },
      variant);
}

double diameter_bound(const Potential& p, double F1, const DiameterVariant& variant) {
  const auto log_z = p.log_partition();
  if (!log_z) throw Error(ErrorCode::MissingLogPartition, "H(mu_1) needs log Z of the target");
  const double h1 = F1 + *log_z;
  DiameterVariant resolved = variant;
  if (auto* g = std::get_if<DiameterGeneral>(&resolved); g && !g->envelope) {
    g->envelope = p.envelope();
    if (!g->envelope) throw Error(ErrorCode::MissingEnvelope, "general diameter bound needs (alpha, beta)");
  }
  if (auto* t = std::get_if<DiameterTalagrand>(&resolved); t && !t->r) {
    if (!(p.lambda() > 0.0)) {
      throw Error(ErrorCode::MissingConstants, "Talagrand default r = 1/lambda needs lambda > 0");
    }
    t->r = 1.0 / p.lambda();
  }
  return diameter_bound_from_entropy(h1, p.dim(), resolved);
}

}  // namespace cavi
