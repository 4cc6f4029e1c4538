#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace cavi {

/// Observations y (first column) and design matrix X (remaining columns).
struct RegressionData {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> features;
};

/// Comma-separated, '.' decimal point, header row required, no quoting.
RegressionData parse_regression_csv(const std::string& text);
RegressionData read_regression_csv(const std::filesystem::path& path);

}  // namespace cavi
