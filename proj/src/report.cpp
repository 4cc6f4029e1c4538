#include "cavi/report.hpp"

#include <string>

namespace cavi {

std::string_view to_string(Backend b) {
  return b == Backend::Grid ? "grid" : "gaussian";
}

std::string_view to_string(SweepMode m) {
  return m == SweepMode::Sequential ? "sequential" : "parallel";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxSweeps: return "max_sweeps";
    case Termination::Diverged: return "diverged";
  }
  return "unknown";
}

std::string_view to_string(ReferenceSource s) {
  switch (s) {
    case ReferenceSource::Analytic: return "analytic";
    case ReferenceSource::FinalState: return "final_state";
    case ReferenceSource::External: return "external";
  }
  return "unknown";
}

Backend backend_from_string(std::string_view s) {
  if (s == "grid") return Backend::Grid;
  if (s == "gaussian") return Backend::Gaussian;
  throw Error(ErrorCode::ParseError, "unknown backend '" + std::string(s) + "'");
}

SweepMode sweep_mode_from_string(std::string_view s) {
  if (s == "sequential") return SweepMode::Sequential;
  if (s == "parallel") return SweepMode::Parallel;
  throw Error(ErrorCode::ParseError, "unknown sweep mode '" + std::string(s) + "'");
}

Termination termination_from_string(std::string_view s) {
  for (auto t : {Termination::Converged, Termination::MaxSweeps, Termination::Diverged}) {
    if (s == to_string(t)) return t;
  }
  throw Error(ErrorCode::ParseError, "unknown termination '" + std::string(s) + "'");
}

ReferenceSource reference_source_from_string(std::string_view s) {
  for (auto r : {ReferenceSource::Analytic, ReferenceSource::FinalState, ReferenceSource::External}) {
    if (s == to_string(r)) return r;
  }
  throw Error(ErrorCode::ParseError, "unknown reference source '" + std::string(s) + "'");
}

PotentialSummary PotentialSummary::of(const Potential& p) {
  PotentialSummary s;
  s.d = p.dim();
  s.quadratic = p.is_quadratic();
  s.lambda = p.lambda();
  s.lipschitz = p.lipschitz();
  s.log_partition_unshifted = p.log_partition_unshifted();
  s.constant = p.constant();
  return s;
}

}  // namespace cavi
