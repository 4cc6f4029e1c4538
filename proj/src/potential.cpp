#include "cavi/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <utility>

namespace cavi {

namespace {

void require_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "point has a non-finite entry");
  }
}

}  // namespace

PairTerm PairTerm::make_bilinear(std::size_t i, std::size_t j, double coefficient,
                                 double offset_i, double offset_j) {
  PairTerm t;
  t.i = i;
  t.j = j;
  t.value = [=](double x, double y) { return coefficient * (x - offset_i) * (y - offset_j); };
  t.d_first = [=](double, double y) { return coefficient * (y - offset_j); };
  t.d_second = [=](double x, double) { return coefficient * (x - offset_i); };
  t.bilinear = Bilinear{coefficient, offset_i, offset_j};
  return t;
}

RegressionPrior RegressionPrior::gaussian(double precision) {
  if (!(precision > 0.0) || !std::isfinite(precision)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian prior precision must be positive");
  }
  RegressionPrior p;
  p.term.value = [precision](double x) { return 0.5 * precision * x * x; };
  p.term.derivative = [precision](double x) { return precision * x; };
  p.curvature_lo = precision;
  p.curvature_hi = precision;
  p.gaussian_precision = precision;
  return p;
}

RegressionPrior RegressionPrior::log_cosh_well(double scale, double well) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(well) || well < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "log-cosh prior needs scale > 0 and well >= 0");
  }
  const double precision = 1.0 / (scale * scale);
  RegressionPrior p;
  // log cosh(x) = |x| + log1p(exp(-2|x|)) - log 2, stable for large |x|.
  p.term.value = [=](double x) {
    const double ax = std::abs(x);
    const double log_cosh = ax + std::log1p(std::exp(-2.0 * ax)) - std::numbers::ln2;
    return 0.5 * precision * x * x - well * log_cosh;
  };
  p.term.derivative = [=](double x) { return precision * x - well * std::tanh(x); };
  // phi'' = precision - well * sech^2(x), and sech^2 ranges over (0, 1].
  p.curvature_lo = precision - well;
  p.curvature_hi = precision;
  return p;
}

Potential Potential::quadratic(const Eigen::MatrixXd& A, const Eigen::VectorXd& m) {
  if (A.rows() != A.cols() || A.rows() != m.size() || A.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "precision must be square and match the mean");
  }
  if (!A.allFinite() || !m.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "quadratic potential has non-finite entries");
  }
  const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorCode::NotSymmetric, "precision matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo <= 1e-10 * hi) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "smallest eigenvalue " + std::to_string(lo) + " is not positive");
  }

  const auto d = static_cast<std::size_t>(A.rows());
  std::vector<UnaryTerm> unaries(d);
  std::vector<PairTerm> pairs;
  for (std::size_t i = 0; i < d; ++i) {
    const double a = sym(i, i);
    const double c = m(i);
    unaries[i].value = [a, c](double x) { return 0.5 * a * (x - c) * (x - c); };
    unaries[i].derivative = [a, c](double x) { return a * (x - c); };
    for (std::size_t j = i + 1; j < d; ++j) {
      if (sym(i, j) != 0.0) pairs.push_back(PairTerm::make_bilinear(i, j, sym(i, j), m(i), m(j)));
    }
  }

  Potential p;
  p.form_ = Form::Quadratic;
  p.unaries_ = std::make_shared<const std::vector<UnaryTerm>>(std::move(unaries));
  p.pairs_ = std::make_shared<const std::vector<PairTerm>>(std::move(pairs));
  p.precision_ = std::make_shared<const Eigen::MatrixXd>(sym);
  p.mean_ = std::make_shared<const Eigen::VectorXd>(m);
  p.lambda_ = lo;
  p.lipschitz_ = hi;
  // psi >= lambda r^2 / 2 >= r - 1 / (2 lambda) with r = |x - m| >= |x| - |m|.
  p.envelope_ = Envelope{-m.norm() - 0.5 / lo, 1.0};
  p.log_partition_ = 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                     0.5 * eig.eigenvalues().array().log().sum();
  p.build_incidence();
  return p;
}

Potential Potential::pairwise(std::vector<UnaryTerm> unaries, std::vector<PairTerm> pairs,
                              PotentialMetadata metadata) {
  const std::size_t d = unaries.size();
  if (d == 0) throw Error(ErrorCode::DimensionMismatch, "pairwise potential needs d >= 1");
  for (const auto& u : unaries) {
    if (!u.value || !u.derivative) {
      throw Error(ErrorCode::InvalidArgument, "unary term needs value and derivative");
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& t : pairs) {
    if (t.i >= t.j || t.j >= d) {
      throw Error(ErrorCode::IndexOutOfRange, "pair (" + std::to_string(t.i) + ", " +
                                                  std::to_string(t.j) +
                                                  ") must satisfy i < j < d");
    }
    if (!seen.emplace(t.i, t.j).second) {
      throw Error(ErrorCode::DuplicatePair, "pair (" + std::to_string(t.i) + ", " +
                                                std::to_string(t.j) + ") given twice");
    }
    if (!t.value || !t.d_first || !t.d_second) {
      throw Error(ErrorCode::InvalidArgument, "pair term needs value and both partials");
    }
  }
  if (metadata.lambda < 0.0 || !std::isfinite(metadata.lambda)) {
    throw Error(ErrorCode::InvalidArgument, "lambda must be finite and >= 0");
  }
  if (metadata.lipschitz && *metadata.lipschitz < metadata.lambda) {
    throw Error(ErrorCode::InvalidArgument, "lipschitz constant below lambda");
  }
  if (metadata.envelope && !(metadata.envelope->beta > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "envelope beta must be positive");
  }

  Potential p;
  p.form_ = Form::PairwiseSeparable;
  p.unaries_ = std::make_shared<const std::vector<UnaryTerm>>(std::move(unaries));
  p.pairs_ = std::make_shared<const std::vector<PairTerm>>(std::move(pairs));
  p.lambda_ = metadata.lambda;
  p.lipschitz_ = metadata.lipschitz;
  p.envelope_ = metadata.envelope;
  p.log_partition_ = metadata.log_partition;
  p.build_incidence();
  return p;
}

Potential Potential::regression(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                double sigma, const RegressionPrior& prior) {
  if (X.rows() != y.size() || X.rows() == 0 || X.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "X must have one row per observation in y");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::NonPositiveSigma, "noise scale sigma must be positive");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "regression data has non-finite entries");
  }
  const Eigen::MatrixXd gram = X.transpose() * X;
  const Eigen::VectorXd xty = X.transpose() * y;
  const double inv_var = 1.0 / (sigma * sigma);

  const auto k = static_cast<std::size_t>(X.cols());
  std::vector<UnaryTerm> unaries(k);
  std::vector<PairTerm> pairs;
  for (std::size_t i = 0; i < k; ++i) {
    const double quad = gram(i, i) * inv_var;
    const double lin = xty(i) * inv_var;
    const UnaryTerm base = prior.term;
    unaries[i].value = [=](double x) { return base.value(x) + 0.5 * quad * x * x - lin * x; };
    unaries[i].derivative = [=](double x) { return base.derivative(x) + quad * x - lin; };
    for (std::size_t j = i + 1; j < k; ++j) {
      if (gram(i, j) != 0.0) pairs.push_back(PairTerm::make_bilinear(i, j, gram(i, j) * inv_var));
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double b = std::max(eig.eigenvalues().minCoeff(), 0.0);
  const double B = std::max(eig.eigenvalues().maxCoeff(), 0.0);

  PotentialMetadata meta;
  meta.lambda = std::max(prior.curvature_lo + b * inv_var, 0.0);
  meta.lipschitz = std::max(prior.curvature_hi + B * inv_var, meta.lambda);
  return pairwise(std::move(unaries), std::move(pairs), meta);
}

Potential regression_as_quadratic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                  double sigma, double prior_precision) {
  if (X.rows() != y.size() || X.rows() == 0 || X.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "X must have one row per observation in y");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::NonPositiveSigma, "noise scale sigma must be positive");
  }
  const double inv_var = 1.0 / (sigma * sigma);
  const auto k = X.cols();
  const Eigen::MatrixXd A =
      prior_precision * Eigen::MatrixXd::Identity(k, k) + inv_var * X.transpose() * X;
  const Eigen::VectorXd m = A.llt().solve(inv_var * X.transpose() * y);
  return Potential::quadratic(A, m);
}

void Potential::build_incidence() {
  std::vector<std::vector<std::size_t>> inc(dim());
  for (std::size_t p = 0; p < pairs_->size(); ++p) {
    inc[(*pairs_)[p].i].push_back(p);
    inc[(*pairs_)[p].j].push_back(p);
  }
  incidence_ = std::make_shared<const std::vector<std::vector<std::size_t>>>(std::move(inc));
}

double Potential::eval(std::span<const double> x) const {
  if (x.size() != dim()) throw Error(ErrorCode::DimensionMismatch, "point has wrong length");
  require_finite(x);
  if (form_ == Form::Quadratic) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd r = v - *mean_;
    return 0.5 * r.dot(*precision_ * r) + constant_;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) s += (*unaries_)[i].value(x[i]);
  for (const auto& t : *pairs_) s += t.value(x[t.i], x[t.j]);
  return s + constant_;
}

double Potential::grad(std::span<const double> x, std::size_t i) const {
  if (x.size() != dim()) throw Error(ErrorCode::DimensionMismatch, "point has wrong length");
  if (i >= dim()) throw Error(ErrorCode::IndexOutOfRange, "coordinate index out of range");
  require_finite(x);
  if (form_ == Form::Quadratic) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) s += (*precision_)(i, j) * (x[j] - (*mean_)(j));
    return s;
  }
  double s = (*unaries_)[i].derivative(x[i]);
  for (std::size_t p : (*incidence_)[i]) {
    const auto& t = (*pairs_)[p];
    s += (t.i == i) ? t.d_first(x[t.i], x[t.j]) : t.d_second(x[t.i], x[t.j]);
  }
  return s;
}

const Eigen::MatrixXd& Potential::precision() const {
  if (!precision_) throw Error(ErrorCode::InvalidArgument, "potential is not quadratic");
  return *precision_;
}

const Eigen::VectorXd& Potential::mean() const {
  if (!mean_) throw Error(ErrorCode::InvalidArgument, "potential is not quadratic");
  return *mean_;
}

std::optional<double> Potential::log_partition() const {
  if (!log_partition_) return std::nullopt;
  return *log_partition_ - constant_;
}

Potential Potential::shifted(double c) const {
  Potential p = *this;
  p.constant_ = constant_ + c;
  if (p.envelope_) p.envelope_->alpha += c;
  return p;
}

}  // namespace cavi
