#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "cavi/diagnostics.hpp"
#include "cavi/engine.hpp"
#include "oracles.hpp"

using namespace cavi;

namespace {

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd A(2, 2);
  A << a, b, c, d;
  return A;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

SweepSchedule schedule(int sweeps, double tol = 1e-8) {
  SweepSchedule s;
  s.sweeps = sweeps;
  s.tol = tol;
  return s;
}

UnaryTerm zero_unary() {
  return {[](double) { return 0.0; }, [](double) { return 0.0; }};
}

// ψ = log cosh x + log cosh y + (x - y)²/4: convex, λ = 0, L = 2.
Potential flat_valley() {
  UnaryTerm u{[](double x) { return std::log(std::cosh(x)) + 0.25 * x * x; },
              [](double x) { return std::tanh(x) + 0.5 * x; }};
  PotentialMetadata meta;
  meta.lambda = 0.0;
  meta.lipschitz = 2.0;
  return Potential::pairwise({u, u}, {PairTerm::make_bilinear(0, 1, -0.5)}, meta);
}

const Potential& run2_potential() {
  static const Potential p = Potential::quadratic(mat2(2, 1, 1, 2), Eigen::Vector2d::Zero());
  return p;
}

const RunReport& run2() {
  static const RunReport r = [] {
    const auto& p = run2_potential();
    return solve(p, init_state(p, InitSpec::narrow_at({1.0, 1.0})), schedule(50));
  }();
  return r;
}

}  // namespace

TEST_CASE("free energy of the standard normal against itself") {
  const auto p = Potential::quadratic(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  const GridSpec g(-10, 10, 4096);
  ProductState s{{GridMarginal::gaussian(g, 0, 1), GridMarginal::gaussian(g, 0, 1)}};
  const double F = free_energy(s, p);
  const double expect = 1.0 + 2.0 * oracle::gaussian_neg_entropy(1.0);
  CHECK(std::abs(F - expect) < 1e-3);
  CHECK(std::abs(F - (-1.837877)) < 1e-3);
  // H(ρ‖ρ) = F + log Z = 0.
  CHECK(std::abs(F + *p.log_partition()) < 1e-3);
}

TEST_CASE("free energy of uniforms under a zero potential") {
  const auto p = Potential::pairwise({zero_unary(), zero_unary()},
                                     {{0, 1, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
                                       [](double, double) { return 0.0; }, std::nullopt}},
                                     {});
  const GridSpec g(0, 1, 101);
  const auto u = GridMarginal::from_log_density(g, std::vector<double>(101, 0.0), BoundaryCheck::Skip);
  CHECK(std::abs(free_energy(ProductState{{u, u}}, p)) < 1e-12);
}

TEST_CASE("free energy includes cross terms") {
  // ∫ψ dμ for independent Gaussians: ½ Σ a_ij (E x_i x_j) with means and variances.
  std::mt19937 rng(6);
  const Eigen::MatrixXd A = oracle::random_spd(rng, 3);
  const Eigen::VectorXd m = oracle::random_vector(rng, 3);
  const auto p = Potential::quadratic(A, m);
  const std::vector<double> mu{0.3, -1.0, 2.0}, sd{0.8, 1.2, 0.5};
  ProductState s;
  for (int i = 0; i < 3; ++i) {
    s.marginals.push_back(GridMarginal::gaussian(GridSpec(mu[i] - 12 * sd[i], mu[i] + 12 * sd[i], 4096), mu[i], sd[i]));
  }
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double cov = i == j ? sd[i] * sd[i] : 0.0;
      expect += 0.5 * A(i, j) * ((mu[i] - m(i)) * (mu[j] - m(j)) + cov);
    }
    expect += oracle::gaussian_neg_entropy(sd[i]);
  }
  CHECK(free_energy(s, p) == doctest::Approx(expect).epsilon(1e-8));

  GaussianState gs{mu, {sd[0] * sd[0], sd[1] * sd[1], sd[2] * sd[2]}};
  CHECK(std::abs(free_energy(gs, p) - free_energy(s, p)) < 1e-3);
}

TEST_CASE("mean-field residual") {
  Eigen::MatrixXd A = Eigen::Vector2d(2.0, 0.5).asDiagonal();
  const auto diag = Potential::quadratic(A, Eigen::Vector2d(1.0, -1.0));
  ProductState exact{{GridMarginal::gaussian(GridSpec(-11, 13, 2048), 1.0, std::sqrt(0.5)),
                      GridMarginal::gaussian(GridSpec(-30, 28, 2048), -1.0, std::sqrt(2.0))}};
  CHECK(mean_field_residual(exact, diag) < 1e-6);

  const auto& r = run2();
  CHECK(r.records.back().residual < 1e-8);
  CHECK(mean_field_residual(r.states.back(), run2_potential()) < 1e-8);

  // Tilt a one-block fixed point by 0.1·x on the window [-1/2, 1/2].
  const auto one = Potential::pairwise({{[](double x) { return 0.5 * x * x; }, [](double x) { return x; }}}, {},
                                       {1.0, 1.0});
  const GridSpec unit(-0.5, 0.5, 1001);
  std::vector<double> logf(unit.size());
  for (std::size_t k = 0; k < unit.size(); ++k) {
    const double x = unit.node(k);
    logf[k] = -0.5 * x * x + 0.1 * x;
  }
  const ProductState tilted{{GridMarginal::from_log_density(unit, logf, BoundaryCheck::Skip)}};
  CHECK(mean_field_residual(tilted, one) >= 0.05 - 1e-12);
}

TEST_CASE("gaussian-state residual vanishes only at the fixed point") {
  const auto& p = run2_potential();
  CHECK(mean_field_residual(GaussianState{{0, 0}, {0.5, 0.5}}, p) < 1e-12);
  CHECK(mean_field_residual(GaussianState{{0.1, 0}, {0.5, 0.5}}, p) > 1e-2);
}

TEST_CASE("exponential certificate constants") {
  CHECK(oracle::exponential_factor(1, 3, 2) == doctest::Approx(18.0 / 19.0));
  const auto c = rate_certificate(run2(), CertificateKind::ExponentialRate, CertificateConstants::of(run2().potential));
  CHECK(*c.factor == doctest::Approx(18.0 / 19.0).epsilon(1e-14));
  CHECK(*c.factor == doctest::Approx(0.947368).epsilon(1e-6));
  CHECK(c.pass);
  CHECK(c.rows.size() == run2().sweeps());
  CHECK(c.rows.front().n == 1);
  for (const auto& row : c.rows) {
    CHECK(row.bound == doctest::Approx(std::pow(18.0 / 19.0, row.n - 1) * *c.gap1).epsilon(1e-12));
  }
}

TEST_CASE("gaussian dimension-free certificate") {
  const double f = oracle::gaussian_dimfree_factor(1, 3);
  CHECK(f == doctest::Approx(0.996773).epsilon(1e-6));
  const auto& p = run2_potential();
  const auto r = solve(p, GaussianState{{1, 1}, {1, 1}}, schedule(50));
  CHECK(r.records[1].means == std::vector<double>{-0.5, 0.25});
  const auto c = rate_certificate(r, CertificateKind::GaussianDimFree, CertificateConstants::of(r.potential));
  CHECK(*c.factor == doctest::Approx(f).epsilon(1e-14));
  CHECK(c.pass);
  // ψ(m_1) = ½ m₁ᵀ A m₁.
  CHECK(*c.gap1 == doctest::Approx(0.5 * (2 * 0.25 + 2 * -0.5 * 0.25 + 2 * 0.0625)).epsilon(1e-14));

  CHECK(code_of([&] {
          rate_certificate(run2(), CertificateKind::GaussianDimFree, CertificateConstants::of(run2().potential));
        }) == ErrorCode::BackendMismatch);
}

TEST_CASE("W2 lower bound") {
  const auto c = rate_certificate(run2(), CertificateKind::W2LowerBound, CertificateConstants::of(run2().potential));
  CHECK(c.pass);
  for (std::size_t n = 1; n < run2().records.size(); ++n) {
    const auto& rec = run2().records[n];
    CHECK(0.5 * rec.w2_star * rec.w2_star <= rec.gap + 1e-7 + 1e-3 * std::abs(rec.gap));
  }

  // At μ_n = μ_* both sides vanish.
  const auto& p = run2_potential();
  const auto star = quadratic_optimum(p);
  const auto r = solve(p, star, schedule(3));
  const auto at = rate_certificate(r, CertificateKind::W2LowerBound, CertificateConstants::of(r.potential));
  CHECK(at.pass);
  for (const auto& row : at.rows) {
    CHECK(row.bound == 0.0);
    CHECK(row.observed == 0.0);
  }
}

TEST_CASE("monotone certificate on sequential runs") {
  std::mt19937 rng(44);
  for (int t = 0; t < 5; ++t) {
    const auto p = Potential::quadratic(oracle::random_spd(rng, 3), oracle::random_vector(rng, 3));
    const auto r = solve(p, init_state(p, InitSpec::standard_gaussian()), schedule(40));
    CHECK(rate_certificate(r, CertificateKind::Monotone, CertificateConstants::of(r.potential), {1e-8, 0.0}).pass);
    CHECK(rate_certificate(r, CertificateKind::ExponentialRate, CertificateConstants::of(r.potential)).pass);
    CHECK(rate_certificate(r, CertificateKind::W2LowerBound, CertificateConstants::of(r.potential)).pass);
  }
}

TEST_CASE("diagonal target: exponential bound is zero after the first sweep") {
  const auto p = Potential::quadratic(Eigen::Matrix2d::Identity() * 2.0, Eigen::Vector2d(1, 1));
  const auto r = solve(p, init_state(p, InitSpec::standard_gaussian()), schedule(10));
  const auto c = rate_certificate(r, CertificateKind::ExponentialRate, CertificateConstants::of(r.potential));
  CHECK(c.pass);
  for (const auto& row : c.rows) {
    if (row.n >= 2) {
      CHECK(std::abs(row.observed) < 1e-7);
    }
  }
  CHECK(*c.factor == doctest::Approx(1.0 - 1.0 / 3.0));
}

TEST_CASE("linear certificate on a merely convex target") {
  const auto p = flat_valley();
  const auto r = solve(p, init_state(p, InitSpec::narrow_at({2.0, -1.0})), schedule(200, 1e-9));
  CHECK(r.termination == Termination::Converged);
  const auto c = rate_certificate(r, CertificateKind::LinearRate, CertificateConstants::of(r.potential));
  CHECK(c.pass);
  CHECK(*c.radius > 0.0);
  CHECK_FALSE(c.radius_bound.has_value());
  const double R = *c.radius, L = 2.0, d = 2.0;
  for (const auto& row : c.rows) {
    const double expect = (2.0 + *c.gap1 + 1.0 / (R * std::sqrt(L * d))) * 2.0 * R * R * L * d / row.n;
    CHECK(row.bound == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(code_of([&] {
          rate_certificate(r, CertificateKind::ExponentialRate, CertificateConstants::of(r.potential));
        }) == ErrorCode::MissingConstants);
}

TEST_CASE("linear certificate reports the diameter alternative when computable") {
  const auto c = rate_certificate(run2(), CertificateKind::LinearRate, CertificateConstants::of(run2().potential));
  CHECK(c.pass);
  REQUIRE(c.radius_bound.has_value());
  CHECK(*c.radius_bound >= *c.radius);
  CHECK(c.rows.front().alt_bound.has_value());
}

TEST_CASE("missing constants and malformed reports") {
  UnaryTerm sq{[](double x) { return 0.5 * x * x; }, [](double x) { return x; }};
  const auto p = Potential::pairwise({sq, sq}, {}, {});
  const auto r = solve(p, init_state(p, InitSpec::standard_gaussian()), schedule(5));
  const auto k = CertificateConstants::of(r.potential);
  CHECK(code_of([&] { rate_certificate(r, CertificateKind::ExponentialRate, k); }) == ErrorCode::MissingConstants);
  CHECK(code_of([&] { rate_certificate(r, CertificateKind::LinearRate, k); }) == ErrorCode::MissingConstants);
  CHECK(code_of([&] { rate_certificate(r, CertificateKind::W2LowerBound, k); }) == ErrorCode::MissingConstants);
  CHECK(rate_certificate(r, CertificateKind::Monotone, k).pass);

  RunReport short_report = r;
  short_report.records.resize(1);
  CHECK(code_of([&] { rate_certificate(short_report, CertificateKind::Monotone, k); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("violations are reported with the first failing sweep") {
  RunReport r = run2();
  REQUIRE(r.records.size() > 4);
  r.records[3].gap = r.records[2].gap + 1.0;
  const auto c = rate_certificate(r, CertificateKind::Monotone, CertificateConstants::of(r.potential));
  CHECK_FALSE(c.pass);
  REQUIRE(c.violating_sweep.has_value());
  CHECK(*c.violating_sweep == 3);
  CHECK(c.max_violation == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("slack override from the environment") {
  ::setenv("CAVI_MF_SLACK", "0.25", 1);
  CHECK(Slack::from_environment().absolute == 0.25);
  CHECK(Slack::from_environment().relative == 1e-3);
  ::unsetenv("CAVI_MF_SLACK");
  CHECK(Slack::from_environment().absolute == 1e-7);
  CHECK(Slack{}.at(-2.0) == doctest::Approx(1e-7 + 2e-3));
}

TEST_CASE("certificate kind names") {
  CHECK(certificate_kind_from_string("monotone") == CertificateKind::Monotone);
  CHECK(certificate_kind_from_string("linear") == CertificateKind::LinearRate);
  CHECK(certificate_kind_from_string("exponential") == CertificateKind::ExponentialRate);
  CHECK(certificate_kind_from_string("gaussian-dimfree") == CertificateKind::GaussianDimFree);
  CHECK(certificate_kind_from_string("w2lower") == CertificateKind::W2LowerBound);
  CHECK(code_of([] { certificate_kind_from_string("bogus"); }) == ErrorCode::ParseError);
  for (auto k : {CertificateKind::Monotone, CertificateKind::LinearRate, CertificateKind::ExponentialRate,
                 CertificateKind::GaussianDimFree, CertificateKind::W2LowerBound}) {
    CHECK(certificate_kind_from_string(to_string(k)) == k);
  }
}

TEST_CASE("diameter bounds") {
  CHECK(diameter_bound_from_entropy(2.0, 1, DiameterTalagrand{1.0}) == doctest::Approx(4.0));
  CHECK(diameter_bound_from_entropy(0.0, 1, DiameterTalagrand{1.0}) == 0.0);
  CHECK(diameter_bound_from_entropy(1.0, 1, DiameterSubgaussian{1.0, 3.0}) == doctest::Approx(4.0));

  const auto& p = run2_potential();
  const double F1 = run2().records[1].free_energy;
  const double H1 = F1 + *p.log_partition();
  CHECK(diameter_bound(p, F1, DiameterTalagrand{}) == doctest::Approx(2.0 * std::sqrt(2.0 * 1.0 * H1)));
  const double general = diameter_bound(p, F1, DiameterGeneral{});
  CHECK(std::isfinite(general));
  CHECK(general > 0.0);
  // Every bound dominates the observed radius.
  double R = 0.0;
  for (std::size_t n = 1; n < run2().records.size(); ++n) R = std::max(R, run2().records[n].w2_star);
  CHECK(diameter_bound(p, F1, DiameterTalagrand{}) >= R);
  CHECK(general >= R);

  UnaryTerm sq{[](double x) { return 0.5 * x * x; }, [](double x) { return x; }};
  const auto no_z = Potential::pairwise({sq}, {}, {1.0, 1.0});
  CHECK(code_of([&] { diameter_bound(no_z, 0.0, DiameterTalagrand{}); }) == ErrorCode::MissingLogPartition);
  PotentialMetadata meta;
  meta.lambda = 1.0;
  meta.log_partition = 0.5 * std::log(2 * oracle::kPi);
  const auto no_env = Potential::pairwise({sq}, {}, meta);
  CHECK(code_of([&] { diameter_bound(no_env, 0.0, DiameterGeneral{}); }) == ErrorCode::MissingEnvelope);
  CHECK(std::isfinite(diameter_bound(no_env, 0.0, DiameterGeneral{Envelope{-1.0, 1.0}})));
}

TEST_CASE("gap series") {
  const auto rows = gap_series(run2());
  REQUIRE(rows.size() == run2().records.size());
  for (std::size_t n = 1; n < rows.size(); ++n) {
    CHECK(rows[n].n == static_cast<int>(n));
    CHECK(rows[n].gap <= rows[n - 1].gap + 1e-8);
  }
  CHECK(rows.back().gap < 1e-6);
  CHECK(rows.back().gap >= -1e-7);

  const auto self = gap_series(run2(), run2().states.back(), run2_potential());
  CHECK(self.back().gap == 0.0);
  CHECK(self.back().w2 == 0.0);

  RunReport single = run2();
  single.records.resize(1);
  single.states.resize(1);
  CHECK(gap_series(single).size() == 1);
}

TEST_CASE("gaps are independent of the normalizing constant") {
  std::mt19937 rng(13);
  const auto p = Potential::quadratic(oracle::random_spd(rng, 3), oracle::random_vector(rng, 3));
  for (double c : {-7.25, 1e-3, 123.5}) {
    const auto q = p.shifted(c);
    const auto a = solve(p, init_state(p, InitSpec::standard_gaussian()), schedule(60));
    const auto b = solve(q, init_state(q, InitSpec::standard_gaussian()), schedule(60));
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t n = 0; n < a.records.size(); ++n) {
      CHECK(a.records[n].gap == b.records[n].gap);
      CHECK(a.records[n].residual == b.records[n].residual);
      CHECK(a.records[n].w2_star == b.records[n].w2_star);
      CHECK(a.records[n].free_energy != b.records[n].free_energy);
    }
    for (auto k : {CertificateKind::Monotone, CertificateKind::LinearRate, CertificateKind::ExponentialRate,
                   CertificateKind::W2LowerBound}) {
      const auto ca = rate_certificate(a, k, CertificateConstants::of(a.potential));
      const auto cb = rate_certificate(b, k, CertificateConstants::of(b.potential));
      CHECK(ca.pass == cb.pass);
      CHECK(ca.max_violation == cb.max_violation);
    }
  }
}

TEST_CASE("analytic and grid free energies of a Gaussian state agree") {
  std::mt19937 rng(77);
  const auto p = Potential::quadratic(oracle::random_spd(rng, 3), oracle::random_vector(rng, 3));
  auto g = init_gaussian_state(p, InitSpec::standard_gaussian());
  for (int n = 0; n < 4; ++n) {
    g = gaussian_sweep(g, p.precision(), p.mean());
    CHECK(std::abs(free_energy(g, p) - free_energy(to_grid(g), p)) < 1e-3);
  }
}
