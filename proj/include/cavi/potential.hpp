#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cavi/error.hpp"

namespace cavi {

/// One-dimensional convex term phi_i(x_i) together with its derivative.
struct UnaryTerm {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

/// Coupling term g_ij(x_i, x_j) between two scalar blocks, i < j.
///
/// When `bilinear` is set the term is known to be
/// bilinear * (x_i - offset_i) * (x_j - offset_j), and integrating it against
/// a marginal only needs that marginal's mean. The callables must still agree
/// with that closed form; they are used for pointwise evaluation.
struct PairTerm {
  std::size_t i = 0;
  std::size_t j = 0;
  std::function<double(double, double)> value;
  std::function<double(double, double)> d_first;
  std::function<double(double, double)> d_second;

  struct Bilinear {
    double coefficient = 0.0;
    double offset_i = 0.0;
    double offset_j = 0.0;
  };
  std::optional<Bilinear> bilinear;

  static PairTerm make_bilinear(std::size_t i, std::size_t j, double coefficient,
                                double offset_i = 0.0, double offset_j = 0.0);
};

/// Lower envelope psi(x) >= alpha + beta |x|.
struct Envelope {
  double alpha = 0.0;
  double beta = 1.0;
};

/// Caller-supplied convexity metadata for pairwise potentials. Trusted as is.
struct PotentialMetadata {
  double lambda = 0.0;
  std::optional<double> lipschitz;
  std::optional<Envelope> envelope;
  std::optional<double> log_partition;
};

/// Prior potential for the coefficients of a regression posterior, with
/// bounds curvature_lo <= phi'' <= curvature_hi.
struct RegressionPrior {
  UnaryTerm term;
  double curvature_lo = 0.0;
  double curvature_hi = 0.0;
  /// Set when phi(x) = precision * x^2 / 2, i.e. the posterior is Gaussian.
  std::optional<double> gaussian_precision;

  static RegressionPrior gaussian(double precision);
  /// phi(x) = x^2 / (2 scale^2) - well * log cosh(x). Non-convex when
  /// well > 1 / scale^2.
  static RegressionPrior log_cosh_well(double scale, double well);
};

/// Target potential psi of rho ∝ exp(-psi) on R^d with one scalar per block.
///
/// Values are immutable after construction. The quadratic form is stored both
/// as (A, m) and as its exact pairwise expansion
///   phi_i(x) = a_ii (x - m_i)^2 / 2,  g_ij = a_ij (x_i - m_i)(x_j - m_j),
/// so coordinate updates treat both forms uniformly.
class Potential {
 public:
  enum class Form { Quadratic, PairwiseSeparable };

  static Potential quadratic(const Eigen::MatrixXd& precision,
                             const Eigen::VectorXd& mean);
  static Potential pairwise(std::vector<UnaryTerm> unaries,
                            std::vector<PairTerm> pairs,
                            PotentialMetadata metadata = {});
  static Potential regression(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              double sigma, const RegressionPrior& prior);

  std::size_t dim() const noexcept { return unaries_->size(); }
  Form form() const noexcept { return form_; }
  bool is_quadratic() const noexcept { return form_ == Form::Quadratic; }

  double eval(std::span<const double> x) const;
  double grad(std::span<const double> x, std::size_t i) const;

  const std::vector<UnaryTerm>& unaries() const noexcept { return *unaries_; }
  const std::vector<PairTerm>& pairs() const noexcept { return *pairs_; }

  /// Pair indices (into pairs()) touching coordinate i.
  const std::vector<std::size_t>& pairs_of(std::size_t i) const {
    return incidence_->at(i);
  }

  // Quadratic form only; throws InvalidArgument otherwise.
  const Eigen::MatrixXd& precision() const;
  const Eigen::VectorXd& mean() const;

  double lambda() const noexcept { return lambda_; }
  std::optional<double> lipschitz() const noexcept { return lipschitz_; }
  std::optional<Envelope> envelope() const noexcept { return envelope_; }

  /// log ∫ exp(-psi), including the additive constant.
  std::optional<double> log_partition() const;

  /// Additive constant c in psi = (structured part) + c. It never enters
  /// coordinate updates; every gap is computed without it.
  double constant() const noexcept { return constant_; }

  /// log ∫ exp(-(psi - c)). Used where the constant must cancel exactly.
  std::optional<double> log_partition_unshifted() const noexcept {
    return log_partition_;
  }

  /// Same target with psi replaced by psi + c.
  Potential shifted(double c) const;

 private:
  Potential() = default;
  void build_incidence();

  Form form_ = Form::PairwiseSeparable;
  std::shared_ptr<const std::vector<UnaryTerm>> unaries_;
  std::shared_ptr<const std::vector<PairTerm>> pairs_;
  std::shared_ptr<const std::vector<std::vector<std::size_t>>> incidence_;
  std::shared_ptr<const Eigen::MatrixXd> precision_;
  std::shared_ptr<const Eigen::VectorXd> mean_;
  double lambda_ = 0.0;
  std::optional<double> lipschitz_;
  std::optional<Envelope> envelope_;
  std::optional<double> log_partition_;
  double constant_ = 0.0;
};

/// The Gaussian-prior regression posterior written as a quadratic potential
/// (same target up to an additive constant).
Potential regression_as_quadratic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                  double sigma, double prior_precision);

}  // namespace cavi
