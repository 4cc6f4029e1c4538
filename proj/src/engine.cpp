#include "cavi/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "cavi/diagnostics.hpp"
#include "cavi/field.hpp"
#include "cavi/serialization.hpp"

namespace cavi {

void SweepSchedule::validate() const {
  if (sweeps < 1) throw Error(ErrorCode::InvalidSchedule, "sweeps must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidSchedule, "tol must be > 0");
}

namespace {

constexpr int kSearchLimit = 200;

double golden_section_min(const CoordinateField& f, double a, double b) {
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < kSearchLimit && (b - a) > 1e-12 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Window on which f - min f stays below window_sds^2 / 2, i.e. mean ± window_sds
// standard deviations when exp(-f) is Gaussian. f is convex for convex ψ.
GridSpec level_set_window(const CoordinateField& f, const GridSpec& current,
                          const std::vector<double>& values, const GridOptions& opts) {
  const double level = 0.5 * opts.window_sds * opts.window_sds;
  const std::size_t n = current.size();
  const auto kmin = static_cast<std::size_t>(
      std::min_element(values.begin(), values.end()) - values.begin());

  double x0 = current.node(kmin);
  if (kmin == 0 || kmin + 1 == n) {
    // The minimum lies outside the window: walk outwards with doubling steps
    // until f rises again, then refine inside the bracket.
    const double dir = kmin == 0 ? -1.0 : 1.0;
    double prev = current.node(kmin == 0 ? 1 : n - 2);
    double a = x0;
    double fa = values[kmin];
    double h = current.hi() - current.lo();
    double b = a + dir * h;
    double fb = f(b);
    int it = 0;
    while (fb < fa) {
      if (++it > kSearchLimit || !std::isfinite(b)) {
        throw Error(ErrorCode::GridOverflow, "conditional potential has no minimum");
      }
      prev = a;
      a = b;
      fa = fb;
      h *= 2.0;
      b = a + dir * h;
      fb = f(b);
    }
    x0 = golden_section_min(f, std::min(prev, b), std::max(prev, b));
  }
  const double f0 = f(x0);

  auto reach = [&](double dir) {
    double t = current.step();
    int it = 0;
    while (f(x0 + dir * t) - f0 < level) {
      if (++it > kSearchLimit || !std::isfinite(t)) {
        throw Error(ErrorCode::GridOverflow, "conditional density does not decay");
      }
      t *= 2.0;
    }
    double lo = it == 0 ? 0.0 : 0.5 * t;
    double hi = t;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (f(x0 + dir * mid) - f0 < level) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return hi;
  };
  const double left = reach(-1.0);
  const double right = reach(1.0);
  return GridSpec(x0 - left, x0 + right, n);
}

std::vector<double> negate(std::vector<double> v) {
  for (double& x : v) x = -x;
  return v;
}

}  // namespace

GridMarginal cavi_update_coordinate(const ProductState& state, const Potential& p, std::size_t i,
                                    const GridOptions& opts) {
  if (state.dim() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state dimension differs from the potential");
  }
  if (i >= p.dim()) throw Error(ErrorCode::IndexOutOfRange, "coordinate index out of range");

  const CoordinateField field(p, state, i);
  GridSpec spec = state.marginals[i].spec();
  bool refit = false;
  int resizes = 0;
  while (true) {
    std::vector<double> f = field.on_grid(spec);
    GridMarginal mu = GridMarginal::from_log_density(spec, negate(f), BoundaryCheck::Skip);
    if (mu.boundary_ratio() < kBoundaryMassRatio) {
      const double sd = std::sqrt(mu.variance());
      const double target = 2.0 * opts.window_sds * sd;
      if (!refit && sd > 0.0 && (spec.hi() - spec.lo()) > 4.0 * target) {
        // Support covers a small fraction of the window; resample it finer.
        const double m = mu.mean();
        spec = GridSpec(m - 0.5 * target, m + 0.5 * target, spec.size());
        refit = true;
        continue;
      }
      return mu;
    }
    if (++resizes > opts.max_resizes) {
      throw Error(ErrorCode::GridOverflow,
                  "coordinate " + std::to_string(i) + " escaped the grid after " +
                      std::to_string(opts.max_resizes) + " resizes");
    }
    if (resizes == 1) {
      spec = level_set_window(field, spec, f, opts);
    } else {
      const double centre = 0.5 * (spec.lo() + spec.hi());
      const double half = spec.hi() - spec.lo();
      spec = GridSpec(centre - half, centre + half, spec.size());
    }
  }
}

ProductState cavi_sweep(const ProductState& state, const Potential& p, const GridOptions& opts,
                        std::vector<double>* half_sweep_free_energy) {
  ProductState next = state;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    next.marginals[i] = cavi_update_coordinate(next, p, i, opts);
    if (half_sweep_free_energy) half_sweep_free_energy->push_back(free_energy(next, p));
  }
  return next;
}

ProductState parallel_sweep(const ProductState& state, const Potential& p,
                            const GridOptions& opts) {
  ProductState next = state;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    next.marginals[i] = cavi_update_coordinate(state, p, i, opts);
  }
  return next;
}

namespace {

void check_gaussian_inputs(const GaussianState& g, const Eigen::MatrixXd& A,
                           const Eigen::VectorXd& m) {
  const auto d = static_cast<Eigen::Index>(g.dim());
  if (A.rows() != d || A.cols() != d || m.size() != d || g.variances.size() != g.means.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gaussian state does not match A and m");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(A).info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "precision matrix is not positive definite");
  }
}

GaussianState gaussian_update(const GaussianState& g, const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& m, bool sequential) {
  check_gaussian_inputs(g, A, m);
  GaussianState next = g;
  const std::size_t d = g.dim();
  for (std::size_t i = 0; i < d; ++i) {
    const auto& source = sequential ? next.means : g.means;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j != i) s += A(i, j) * (source[j] - m(j));
    }
    next.means[i] = m(i) - s / A(i, i);
    next.variances[i] = 1.0 / A(i, i);
  }
  return next;
}

}  // namespace

GaussianState gaussian_sweep(const GaussianState& g, const Eigen::MatrixXd& A,
                             const Eigen::VectorXd& m) {
  return gaussian_update(g, A, m, true);
}

GaussianState gaussian_parallel_sweep(const GaussianState& g, const Eigen::MatrixXd& A,
                                      const Eigen::VectorXd& m) {
  return gaussian_update(g, A, m, false);
}

double narrow_init_sd(const GridOptions& opts) {
  return 5.0 * (2.0 * kInitHalfWidth) / static_cast<double>(opts.n_nodes - 1);
}

ProductState init_state(const Potential& p, const InitSpec& init, const GridOptions& opts) {
  ProductState state;
  switch (init.kind) {
    case InitSpec::Kind::StandardGaussian: {
      const GridSpec spec(-kInitHalfWidth, kInitHalfWidth, opts.n_nodes);
      state.marginals.assign(p.dim(), GridMarginal::gaussian(spec, 0.0, 1.0));
      break;
    }
    case InitSpec::Kind::NarrowAtPoint: {
      if (init.point.size() != p.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "initial point has wrong length");
      }
      const double sd = narrow_init_sd(opts);
      for (double x0 : init.point) {
        if (!std::isfinite(x0)) throw Error(ErrorCode::NonFiniteInput, "initial point not finite");
        const GridSpec spec(x0 - kInitHalfWidth, x0 + kInitHalfWidth, opts.n_nodes);
        state.marginals.push_back(GridMarginal::gaussian(spec, x0, sd));
      }
      break;
    }
    case InitSpec::Kind::FromFile:
      state = read_state_file(init.path);
      if (state.dim() != p.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "stored state has " + std::to_string(state.dim()) +
                                                      " coordinates, potential has " +
                                                      std::to_string(p.dim()));
      }
      break;
  }
  return state;
}

GaussianState init_gaussian_state(const Potential& p, const InitSpec& init,
                                  const GridOptions& opts) {
  GaussianState g;
  switch (init.kind) {
    case InitSpec::Kind::StandardGaussian:
      g.means.assign(p.dim(), 0.0);
      g.variances.assign(p.dim(), 1.0);
      break;
    case InitSpec::Kind::NarrowAtPoint: {
      if (init.point.size() != p.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "initial point has wrong length");
      }
      const double sd = narrow_init_sd(opts);
      g.means = init.point;
      g.variances.assign(p.dim(), sd * sd);
      break;
    }
    case InitSpec::Kind::FromFile: {
      const ProductState s = init_state(p, init, opts);
      g.means = s.means();
      g.variances = s.variances();
      break;
    }
  }
  return g;
}

GaussianState quadratic_optimum(const Potential& p) {
  const auto& A = p.precision();
  GaussianState g;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    g.means.push_back(p.mean()(static_cast<Eigen::Index>(i)));
    g.variances.push_back(1.0 / A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
  }
  return g;
}

ProductState to_grid(const GaussianState& g, const GridOptions& opts) {
  ProductState s;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const double sd = std::sqrt(g.variances[i]);
    const GridSpec spec(g.means[i] - opts.window_sds * sd, g.means[i] + opts.window_sds * sd,
                        opts.n_nodes);
    s.marginals.push_back(GridMarginal::gaussian(spec, g.means[i], sd));
  }
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Certificates need at least sweeps 0, 1 and 2.
constexpr int kMinSweeps = 2;

}  // namespace

RunReport solve(const Potential& p, const ProductState& init, const SweepSchedule& sched,
                const GridOptions& opts) {
  sched.validate();
  if (init.dim() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "initial state does not match the potential");
  }
  const bool sequential = sched.mode == SweepMode::Sequential;

  RunReport report;
  report.backend = Backend::Grid;
  report.mode = sched.mode;
  report.potential = PotentialSummary::of(p);

  auto make_record = [&](int n, const ProductState& s) {
    SweepRecord r;
    r.sweep = n;
    r.free_energy = free_energy(s, p);
    r.residual = mean_field_residual(s, p);
    r.second_moment = s.second_moment();
    r.means = s.means();
    r.variances = s.variances();
    return r;
  };

  auto t0 = Clock::now();
  ProductState state = init;
  report.records.push_back(make_record(0, state));
  report.records.back().wall_time_s = seconds_since(t0);
  report.states.push_back(state);

  report.termination = Termination::MaxSweeps;
  for (int n = 1; n <= sched.sweeps; ++n) {
    t0 = Clock::now();
    std::vector<double> half;
    ProductState next = sequential
                            ? cavi_sweep(state, p, opts,
                                         sched.track_half_sweeps ? &half : nullptr)
                            : parallel_sweep(state, p, opts);
    SweepRecord r = make_record(n, next);
    r.w2_step = w2_product(next, state);
    r.half_sweep_free_energy = std::move(half);
    r.wall_time_s = seconds_since(t0);
    report.records.push_back(std::move(r));
    report.states.push_back(next);
    state = std::move(next);

    const SweepRecord& last = report.records.back();
    if (!sequential && !(last.second_moment <= kDivergenceMoment)) {
      report.termination = Termination::Diverged;
      break;
    }
    if (last.residual < sched.tol && n >= std::min(kMinSweeps, sched.sweeps)) {
      report.termination = Termination::Converged;
      break;
    }
  }

  if (p.is_quadratic()) {
    anchor_report(report, to_grid(quadratic_optimum(p), opts), p, ReferenceSource::Analytic);
  } else {
    const ProductState final_state = report.states.back();
    anchor_report(report, final_state, p, ReferenceSource::FinalState);
  }
  if (!sched.keep_states) {
    ProductState final_state = std::move(report.states.back());
    report.states.clear();
    report.states.push_back(std::move(final_state));
  }
  return report;
}

RunReport solve(const Potential& p, const GaussianState& init, const SweepSchedule& sched) {
  sched.validate();
  if (!p.is_quadratic()) {
    throw Error(ErrorCode::BackendMismatch, "the gaussian backend needs a quadratic potential");
  }
  if (init.dim() != p.dim() || init.variances.size() != init.means.size()) {
    throw Error(ErrorCode::DimensionMismatch, "initial state does not match the potential");
  }
  const auto& A = p.precision();
  const auto& m = p.mean();
  const bool sequential = sched.mode == SweepMode::Sequential;

  RunReport report;
  report.backend = Backend::Gaussian;
  report.mode = sched.mode;
  report.potential = PotentialSummary::of(p);

  auto make_record = [&](int n, const GaussianState& g) {
    SweepRecord r;
    r.sweep = n;
    r.free_energy = free_energy(g, p);
    r.residual = mean_field_residual(g, p);
    for (std::size_t i = 0; i < g.dim(); ++i) {
      r.second_moment += g.means[i] * g.means[i] + g.variances[i];
    }
    r.means = g.means;
    r.variances = g.variances;
    return r;
  };

  auto t0 = Clock::now();
  GaussianState state = init;
  report.records.push_back(make_record(0, state));
  report.records.back().wall_time_s = seconds_since(t0);
  report.gaussian_states.push_back(state);

  report.termination = Termination::MaxSweeps;
  for (int n = 1; n <= sched.sweeps; ++n) {
    t0 = Clock::now();
    GaussianState next = sequential ? gaussian_sweep(state, A, m) : gaussian_parallel_sweep(state, A, m);
    SweepRecord r = make_record(n, next);
    r.w2_step = w2_gaussian(next, state);
    r.wall_time_s = seconds_since(t0);
    report.records.push_back(std::move(r));
    report.gaussian_states.push_back(next);
    state = std::move(next);

    const SweepRecord& last = report.records.back();
    if (!sequential && !(last.second_moment <= kDivergenceMoment)) {
      report.termination = Termination::Diverged;
      break;
    }
    if (last.residual < sched.tol && n >= std::min(kMinSweeps, sched.sweeps)) {
      report.termination = Termination::Converged;
      break;
    }
  }

  anchor_report(report, quadratic_optimum(p), p, ReferenceSource::Analytic);
  if (!sched.keep_states) {
    GaussianState final_state = std::move(report.gaussian_states.back());
    report.gaussian_states.clear();
    report.gaussian_states.push_back(std::move(final_state));
  }
  return report;
}

}  // namespace cavi
