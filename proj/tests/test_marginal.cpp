#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cavi/marginal.hpp"
#include "oracles.hpp"

using namespace cavi;

namespace {

GridMarginal from_fn(const GridSpec& spec, auto&& logf, BoundaryCheck check = BoundaryCheck::Enforce) {
  std::vector<double> v(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) v[k] = logf(spec.node(k));
  return GridMarginal::from_log_density(spec, v, check);
}

GridMarginal uniform(double lo, double hi, std::size_t n) {
  return from_fn(GridSpec(lo, hi, n), [](double) { return 0.0; }, BoundaryCheck::Skip);
}

GridMarginal std_normal(std::size_t n = 4096) {
  return from_fn(GridSpec(-10, 10, n), [](double x) { return -0.5 * x * x; });
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

}  // namespace

TEST_CASE("grid spec validation") {
  CHECK(code_of([] { GridSpec(1.0, 0.0, 100); }) == ErrorCode::InvalidGrid);
  CHECK(code_of([] { GridSpec(0.0, 1.0, 15); }) == ErrorCode::InvalidGrid);
  CHECK(code_of([] { GridSpec(0.0, std::numeric_limits<double>::infinity(), 100); }) ==
        ErrorCode::InvalidGrid);
  const GridSpec g(-1.0, 1.0, 21);
  CHECK(g.step() == doctest::Approx(0.1));
  CHECK(g.node(0) == -1.0);
  CHECK(g.node(20) == 1.0);
}

TEST_CASE("normalization from a log density") {
  const auto u = uniform(0, 1, 101);
  for (double v : u.density()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  const auto n = std_normal();
  const auto& spec = n.spec();
  // Node nearest zero on an even grid sits half a cell away.
  std::size_t k0 = 0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (std::abs(spec.node(k)) < std::abs(spec.node(k0))) k0 = k;
  }
  CHECK(n.density()[k0] == doctest::Approx(oracle::normal_pdf(spec.node(k0), 0, 1)).epsilon(1e-6));
  const auto odd = from_fn(GridSpec(-10, 10, 4097), [](double x) { return -0.5 * x * x; });
  CHECK(std::abs(odd.density()[2048] - 0.3989423) < 1e-6);
  CHECK(trapezoid(spec, n.density()) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 0; k < spec.size(); k += 97) {
    CHECK(n.density()[k] == doctest::Approx(std::exp(n.log_density()[k])).epsilon(1e-12));
  }
}

TEST_CASE("invalid log densities") {
  const GridSpec g(0, 1, 32);
  std::vector<double> v(32, 0.0);
  v[4] = std::numeric_limits<double>::infinity();
  CHECK(code_of([&] { GridMarginal::from_log_density(g, v); }) == ErrorCode::NonFiniteLogDensity);
  v[4] = std::nan("");
  CHECK(code_of([&] { GridMarginal::from_log_density(g, v); }) == ErrorCode::NonFiniteLogDensity);
  CHECK(code_of([] { GridMarginal::from_log_density(GridSpec(0, 1, 101), std::vector<double>(101, 0.0)); }) ==
        ErrorCode::BoundaryMass);
  CHECK(code_of([] { from_fn(GridSpec(-2, 2, 200), [](double x) { return -0.5 * x * x; }); }) ==
        ErrorCode::BoundaryMass);
}

TEST_CASE("density adoption validates normalization") {
  const GridSpec g(0, 1, 101);
  CHECK(code_of([&] { GridMarginal::from_density(g, std::vector<double>(101, 2.0)); }) == ErrorCode::NotNormalized);
  CHECK(code_of([&] { GridMarginal::from_density(g, std::vector<double>(100, 1.0)); }) == ErrorCode::DimensionMismatch);
  const auto n = std_normal(512);
  const auto again = GridMarginal::from_density(n.spec(), {n.density().begin(), n.density().end()});
  CHECK(std::equal(n.density().begin(), n.density().end(), again.density().begin()));
}

TEST_CASE("entropy") {
  CHECK(std::abs(uniform(0, 1, 101).entropy()) < 1e-12);
  CHECK(uniform(0, 2, 101).entropy() == doctest::Approx(-std::log(2.0)).epsilon(1e-6));
  CHECK(std::abs(std_normal().entropy() - (-1.418939)) < 1e-4);
  CHECK(std::abs(std_normal().entropy() - oracle::gaussian_neg_entropy(1.0)) < 1e-4);
}

TEST_CASE("entropy is translation invariant") {
  for (double c : {-3.7, 0.25, 11.0}) {
    const auto a = GridMarginal::gaussian(GridSpec(-10, 10, 2048), 0.0, 1.3);
    const auto b = GridMarginal::gaussian(GridSpec(-10 + c, 10 + c, 2048), c, 1.3);
    CHECK(std::abs(a.entropy() - b.entropy()) < 1e-8);
  }
}

TEST_CASE("moments") {
  CHECK(std::abs(std_normal().moment(0) - 1.0) < 1e-9);
  CHECK(std::abs(uniform(-3, 5, 333).moment(0) - 1.0) < 1e-9);
  CHECK(uniform(0, 1, 101).moment(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(std_normal().moment(2) - 1.0) < 1e-4);
  const auto g = GridMarginal::gaussian(GridSpec(-20, 30, 4096), 2.0, 3.0);
  CHECK(g.mean() == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g.variance() == doctest::Approx(9.0).epsilon(1e-8));
}

TEST_CASE("quantiles") {
  const auto g = GridMarginal::gaussian(GridSpec(-6, 10, 1001), 2.0, 1.0);
  CHECK(std::abs(g.quantile(0.5) - 2.0) < g.spec().step());
  CHECK(std::abs(std_normal().quantile(0.841345) - 1.0) < 1e-3);
  CHECK(code_of([&] { g.quantile(1.5); }) == ErrorCode::UOutOfRange);
  CHECK(code_of([&] { g.quantile(0.0); }) == ErrorCode::UOutOfRange);
  CHECK(code_of([&] { g.quantile(1.0); }) == ErrorCode::UOutOfRange);
}

TEST_CASE("quantile inverts the cdf on the support interior") {
  const auto g = GridMarginal::gaussian(GridSpec(-8, 8, 700), 0.5, 1.2);
  for (double x = -2.5; x <= 3.5; x += 0.173) {
    const double u = g.cdf_at(x);
    CHECK(std::abs(g.quantile(u) - x) < g.spec().step());
  }
  CHECK(g.cdf().front() == 0.0);
  CHECK(g.cdf().back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("one-dimensional W2") {
  const auto a = std_normal();
  CHECK(w2_1d(a, a) < 1e-8);
  const auto shifted = from_fn(GridSpec(-9, 11, 4096), [](double x) { return -0.5 * (x - 1) * (x - 1); });
  CHECK(std::abs(w2_1d(a, shifted) - 1.0) < 1e-3);
  const auto wide = from_fn(GridSpec(-20, 20, 4096), [](double x) { return -x * x / 8.0; });
  CHECK(std::abs(w2_1d(a, wide) - 1.0) < 1e-3);
  CHECK(std::abs(w2_1d(wide, a) - 1.0) < 1e-3);
}

TEST_CASE("W2 is symmetric and satisfies the triangle inequality") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> mean(-3, 3), sd(0.3, 2.5), lo(-25, -15);
  auto random_marginal = [&] {
    const double m = mean(rng), s = sd(rng), l = lo(rng);
    const double w = mean(rng);
    // Two-component mixture for non-Gaussian shapes.
    return from_fn(GridSpec(l, l + 40, 1500), [&](double x) {
      const double z1 = (x - m) / s, z2 = (x - m - w) / (0.5 * s);
      const double l1 = std::log(0.7) - 0.5 * z1 * z1, l2 = std::log(0.3) - 0.5 * z2 * z2;
      return std::max(l1, l2) + std::log1p(std::exp(-std::abs(l1 - l2)));
    });
  };
  for (int t = 0; t < 10; ++t) {
    const auto a = random_marginal(), b = random_marginal(), c = random_marginal();
    CHECK(std::abs(w2_1d(a, b) - w2_1d(b, a)) < 1e-6);
    CHECK(w2_1d(a, c) <= w2_1d(a, b) + w2_1d(b, c) + 1e-6);
  }
}

TEST_CASE("product W2") {
  const GridSpec g(-10, 10, 2048);
  ProductState a{{GridMarginal::gaussian(g, 0, 1), GridMarginal::gaussian(g, 0, 1)}};
  ProductState b{{GridMarginal::gaussian(g, 1, 1), GridMarginal::gaussian(g, 1, 1)}};
  CHECK(std::abs(w2_product(a, b) - std::sqrt(2.0)) < 2e-3);
  CHECK(w2_product(a, a) == 0.0);

  ProductState c3{{GridMarginal::gaussian(g, 0, 1), GridMarginal::gaussian(g, 0, 1), GridMarginal::gaussian(g, 0, 1)}};
  ProductState d3 = c3;
  d3.marginals[2] = GridMarginal::gaussian(GridSpec(-20, 20, 2048), 0.4, 2.0);
  CHECK(w2_product(c3, d3) == doctest::Approx(w2_1d(c3[2], d3[2])).epsilon(1e-14));

  CHECK(code_of([&] { w2_product(a, c3); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("Gauss-Legendre rule integrates polynomials exactly") {
  const auto& rule = gauss_legendre_unit(kQuantileQuadratureNodes);
  double s0 = 0, s5 = 0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    CHECK(rule.nodes[k] > 0.0);
    CHECK(rule.nodes[k] < 1.0);
    s0 += rule.weights[k];
    s5 += rule.weights[k] * std::pow(rule.nodes[k], 5);
  }
  CHECK(s0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(s5 == doctest::Approx(1.0 / 6.0).epsilon(1e-13));
}

TEST_CASE("refinement errors shrink by four when the step halves") {
  // Laplace density with its kink on a node: smooth pieces, so the trapezoid
  // error is second order. Gaussians converge much faster than O(Δ²).
  auto laplace = [](std::size_t n) {
    return from_fn(GridSpec(-30, 30, n), [](double x) { return -std::abs(x); });
  };
  const double h_exact = -(1.0 + std::log(2.0));
  const double m2_exact = 2.0;
  auto errors = [&](std::size_t n) {
    const auto mu = laplace(n);
    return std::pair{std::abs(mu.entropy() - h_exact), std::abs(mu.moment(2) - m2_exact)};
  };
  const auto e1 = errors(257), e2 = errors(513), e3 = errors(1025);
  const double r_h1 = e1.first / e2.first, r_h2 = e2.first / e3.first;
  const double r_m1 = e1.second / e2.second, r_m2 = e2.second / e3.second;
  CHECK(r_h1 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(r_h2 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(r_m1 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(r_m2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("product state summaries") {
  const GridSpec g(-12, 12, 1024);
  ProductState s{{GridMarginal::gaussian(g, 1, 1), GridMarginal::gaussian(g, -2, 0.5)}};
  CHECK(s.dim() == 2);
  CHECK(s.means()[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.means()[1] == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(s.variances()[1] == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(s.second_moment() == doctest::Approx(1 + 1 + 4 + 0.25).epsilon(1e-8));
}
