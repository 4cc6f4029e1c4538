#include "cavi/serialization.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <system_error>

namespace cavi {

namespace fs = std::filesystem;

namespace {

Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::optional<double> read_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// nlohmann reports type and key errors as its own exceptions; fold them into
// ParseError so callers deal with one error type.
template <class F>
auto parse_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string(what) + ": " + e.what());
  }
}

}  // namespace

Json state_to_json(const ProductState& state) {
  Json coords = Json::array();
  for (const auto& mu : state.marginals) {
    coords.push_back({{"lo", mu.spec().lo()},
                      {"hi", mu.spec().hi()},
                      {"n_nodes", mu.spec().size()},
                      {"density", std::vector<double>(mu.density().begin(), mu.density().end())}});
  }
  return {{"coordinates", std::move(coords)}};
}

ProductState state_from_json(const Json& j) {
  return parse_guard("state", [&] {
    ProductState state;
    for (const auto& c : j.at("coordinates")) {
      const GridSpec spec(c.at("lo").get<double>(), c.at("hi").get<double>(),
                          c.at("n_nodes").get<std::size_t>());
      state.marginals.push_back(
          GridMarginal::from_density(spec, c.at("density").get<std::vector<double>>()));
    }
    if (state.marginals.empty()) throw Error(ErrorCode::ParseError, "state has no coordinates");
    return state;
  });
}

void write_state_file(const fs::path& path, const ProductState& state) {
  write_file_atomic(path, state_to_json(state).dump());
}

ProductState read_state_file(const fs::path& path) {
  return state_from_json(read_json_file(path));
}

Json report_to_json(const RunReport& report, const Json& config, const std::string& final_state) {
  Json records = Json::array();
  Json wall = Json::array();
  for (const auto& r : report.records) {
    records.push_back({{"sweep", r.sweep},
                       {"free_energy", r.free_energy},
                       {"gap", r.gap},
                       {"w2_step", optional_number(r.w2_step)},
                       {"w2_star", r.w2_star},
                       {"residual", r.residual},
                       {"second_moment", r.second_moment},
                       {"means", r.means},
                       {"variances", r.variances},
                       {"half_sweep_free_energy", r.half_sweep_free_energy}});
    wall.push_back(r.wall_time_s);
  }
  const auto& p = report.potential;
  return {
      {"format", "cavi-mf-report"},
      {"version", 1},
      {"config", config},
      {"backend", to_string(report.backend)},
      {"mode", to_string(report.mode)},
      {"potential",
       {{"d", p.d},
        {"form", p.quadratic ? "quadratic" : "pairwise"},
        {"lambda", p.lambda},
        {"lipschitz", optional_number(p.lipschitz)},
        {"log_partition_unshifted", optional_number(p.log_partition_unshifted)},
        {"constant", p.constant}}},
      {"reference",
       {{"source", to_string(report.reference)},
        {"free_energy_unshifted", report.reference_free_energy}}},
      {"termination", to_string(report.termination)},
      {"final_state", final_state},
      {"records", std::move(records)},
      {"timestamp", {{"created", utc_now()}, {"wall_time_s", std::move(wall)}}},
  };
}

RunReport report_from_json(const Json& j) {
  return parse_guard("report", [&] {
    if (j.value("format", "") != "cavi-mf-report") {
      throw Error(ErrorCode::ParseError, "not a cavi-mf report");
    }
    RunReport report;
    report.backend = backend_from_string(j.at("backend").get<std::string>());
    report.mode = sweep_mode_from_string(j.at("mode").get<std::string>());
    const Json& p = j.at("potential");
    report.potential.d = p.at("d").get<std::size_t>();
    report.potential.quadratic = p.at("form").get<std::string>() == "quadratic";
    report.potential.lambda = p.at("lambda").get<double>();
    report.potential.lipschitz = read_optional(p, "lipschitz");
    report.potential.log_partition_unshifted = read_optional(p, "log_partition_unshifted");
    report.potential.constant = p.at("constant").get<double>();
    report.reference = reference_source_from_string(j.at("reference").at("source").get<std::string>());
    report.reference_free_energy = j.at("reference").at("free_energy_unshifted").get<double>();
    report.termination = termination_from_string(j.at("termination").get<std::string>());

    const Json* wall = nullptr;
    if (j.contains("timestamp") && j.at("timestamp").contains("wall_time_s")) {
      wall = &j.at("timestamp").at("wall_time_s");
    }
    std::size_t k = 0;
    for (const auto& r : j.at("records")) {
      SweepRecord rec;
      rec.sweep = r.at("sweep").get<int>();
      rec.free_energy = r.at("free_energy").get<double>();
      rec.gap = r.at("gap").get<double>();
      rec.w2_step = read_optional(r, "w2_step");
      rec.w2_star = r.at("w2_star").get<double>();
      rec.residual = r.at("residual").get<double>();
      rec.second_moment = r.at("second_moment").get<double>();
      rec.means = r.at("means").get<std::vector<double>>();
      rec.variances = r.at("variances").get<std::vector<double>>();
      rec.half_sweep_free_energy = r.at("half_sweep_free_energy").get<std::vector<double>>();
      if (wall && k < wall->size()) rec.wall_time_s = wall->at(k).get<double>();
      if (rec.sweep != static_cast<int>(k)) {
        throw Error(ErrorCode::ParseError, "records must be numbered 0, 1, 2, ...");
      }
      report.records.push_back(std::move(rec));
      ++k;
    }
    if (report.records.empty()) throw Error(ErrorCode::ParseError, "report has no records");
    return report;
  });
}

Json certificate_to_json(const Certificate& cert) {
  Json rows = Json::array();
  for (const auto& r : cert.rows) {
    Json row = {{"n", r.n}, {"bound", r.bound}, {"observed", r.observed}, {"slack", r.slack}};
    if (r.alt_bound) row["alt_bound"] = *r.alt_bound;
    rows.push_back(std::move(row));
  }
  Json constants = {{"d", cert.constants.d},
                    {"lambda", optional_number(cert.constants.lambda)},
                    {"lipschitz", optional_number(cert.constants.lipschitz)},
                    {"factor", optional_number(cert.factor)},
                    {"R", optional_number(cert.radius)},
                    {"R_bound", optional_number(cert.radius_bound)},
                    {"gap1", optional_number(cert.gap1)}};
  return {{"kind", to_string(cert.kind)},
          {"constants", std::move(constants)},
          {"slack", {{"absolute", cert.slack.absolute}, {"relative", cert.slack.relative}}},
          {"pass", cert.pass},
          {"max_violation", cert.rows.empty() ? Json(nullptr) : Json(cert.max_violation)},
          {"violating_sweep", cert.violating_sweep ? Json(*cert.violating_sweep) : Json(nullptr)},
          {"rows", std::move(rows)}};
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::FileNotFound, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::FileNotFound, "cannot rename onto " + path.string());
  }
}

}  // namespace cavi
