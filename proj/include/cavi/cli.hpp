#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cavi/engine.hpp"
#include "cavi/potential.hpp"
#include "cavi/serialization.hpp"

namespace cavi::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageOrIoError = 1,
  kNotConverged = 2,
  kCertificateFailed = 3,
  kDiverged = 4,
};

struct PriorConfig {
  /// "gaussian" (precision) or "custom" (log-cosh well: scale, well).
  std::string name = "gaussian";
  double precision = 1.0;
  double scale = 1.0;
  double well = 0.0;

  RegressionPrior build() const;
  Json to_json() const;
};

struct TargetConfig {
  enum class Kind { Quadratic, Regression };
  Kind kind = Kind::Quadratic;
  Eigen::MatrixXd A;
  Eigen::VectorXd m;
  std::filesystem::path data_path;
  double sigma = 1.0;
  PriorConfig prior;
};

/// One JSON document; matrices are row-major nested arrays. Relative paths
/// resolve against the config file's directory.
struct RunConfig {
  TargetConfig target;
  Backend backend = Backend::Grid;
  GridOptions grid;
  SweepSchedule schedule;
  InitSpec init;
  std::string report_name = "report.json";
  std::string state_name = "final_state.json";
  Json echo;

  static RunConfig from_json(const Json& j, const std::filesystem::path& base_dir);
  Potential build_potential() const;
};

int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
            std::ostream& out, std::ostream& err);

struct VerifyOptions {
  std::filesystem::path report;
  std::vector<std::string> kinds;
  std::optional<double> lambda;
  std::optional<double> lipschitz;
  /// Defaults to certificates.json next to the report.
  std::optional<std::filesystem::path> out;
};
int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err);

struct RegressOptions {
  std::filesystem::path data;
  double sigma = 1.0;
  PriorConfig prior;
  std::filesystem::path out_dir;
  GridOptions grid;
  SweepSchedule schedule;
};
int cmd_regress(const RegressOptions& opts, std::ostream& out, std::ostream& err);

/// Entry point used by the cavi-mf binary.
int main(int argc, char** argv);

}  // namespace cavi::cli
