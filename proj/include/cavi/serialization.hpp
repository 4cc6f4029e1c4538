#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "cavi/diagnostics.hpp"
#include "cavi/marginal.hpp"
#include "cavi/report.hpp"

namespace cavi {

using Json = nlohmann::json;

/// [{lo, hi, n_nodes, density: [...]}, ...] per coordinate. Doubles are
/// written in shortest round-trip form, so reading back is bit-exact.
Json state_to_json(const ProductState& state);
ProductState state_from_json(const Json& j);

void write_state_file(const std::filesystem::path& path, const ProductState& state);
ProductState read_state_file(const std::filesystem::path& path);

/// Everything except wall-clock data is deterministic; timings live under the
/// "timestamp" key so reports can be compared with that key dropped.
Json report_to_json(const RunReport& report, const Json& config, const std::string& final_state);
/// Rebuilds the series a certificate needs; state snapshots are not stored.
RunReport report_from_json(const Json& j);

Json certificate_to_json(const Certificate& cert);

/// Parse a JSON file; FileNotFound or ParseError on failure.
Json read_json_file(const std::filesystem::path& path);

/// Write via a sibling temporary file and rename, so readers never observe a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace cavi
