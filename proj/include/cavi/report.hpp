#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cavi/marginal.hpp"
#include "cavi/potential.hpp"

namespace cavi {

/// Closed-form state for quadratic targets: every marginal is N(mean_i, variance_i).
struct GaussianState {
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t dim() const noexcept { return means.size(); }
};

enum class Backend { Grid, Gaussian };
enum class SweepMode { Sequential, Parallel };
enum class Termination { Converged, MaxSweeps, Diverged };
enum class ReferenceSource { Analytic, FinalState, External };

std::string_view to_string(Backend b);
std::string_view to_string(SweepMode m);
std::string_view to_string(Termination t);
std::string_view to_string(ReferenceSource s);
Backend backend_from_string(std::string_view s);
SweepMode sweep_mode_from_string(std::string_view s);
Termination termination_from_string(std::string_view s);
ReferenceSource reference_source_from_string(std::string_view s);

/// Constants of the target that the certificates consume.
struct PotentialSummary {
  std::size_t d = 0;
  bool quadratic = false;
  double lambda = 0.0;
  std::optional<double> lipschitz;
  /// log ∫ exp(-(psi - constant)).
  std::optional<double> log_partition_unshifted;
  double constant = 0.0;

  static PotentialSummary of(const Potential& p);
};

/// One row per sweep; sweep 0 is the initialization.
struct SweepRecord {
  int sweep = 0;
  /// F(μ_n) = ∫ψ dμ_n + Σ_i h(μ_n^i), including the potential's constant.
  double free_energy = 0.0;
  /// F(μ_n) - F(μ_*), computed without the constant.
  double gap = 0.0;
  std::optional<double> w2_step;
  double w2_star = 0.0;
  double residual = 0.0;
  double second_moment = 0.0;
  std::vector<double> means;
  std::vector<double> variances;
  /// F after each coordinate update within the sweep (sequential grid runs).
  std::vector<double> half_sweep_free_energy;
  double wall_time_s = 0.0;
};

struct RunReport {
  Backend backend = Backend::Grid;
  SweepMode mode = SweepMode::Sequential;
  PotentialSummary potential;
  std::vector<SweepRecord> records;
  Termination termination = Termination::MaxSweeps;
  ReferenceSource reference = ReferenceSource::FinalState;
  /// F(μ_*) without the potential's constant.
  double reference_free_energy = 0.0;

  // Snapshots, present for in-memory runs; not serialized.
  std::vector<ProductState> states;
  std::vector<GaussianState> gaussian_states;

  std::size_t sweeps() const noexcept { return records.empty() ? 0 : records.size() - 1; }
};

}  // namespace cavi
