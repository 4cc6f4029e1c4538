#include "cavi/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cavi/diagnostics.hpp"
#include "cavi/regression_data.hpp"

namespace cavi::cli {

namespace fs = std::filesystem;

namespace {

template <class F>
auto config_guard(F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw Error(ErrorCode::ParseError, "matrix is empty");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw Error(ErrorCode::ParseError, "matrix rows differ in length");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return A;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

int exit_for(Termination t) {
  switch (t) {
    case Termination::Converged: return kOk;
    case Termination::MaxSweeps: return kNotConverged;
    case Termination::Diverged: return kDiverged;
  }
  return kUsageOrIoError;
}

struct RunOutputs {
  RunReport report;
  ProductState final_state;
};

RunOutputs execute(const Potential& p, Backend backend, const InitSpec& init,
                   const SweepSchedule& sched, const GridOptions& grid) {
  SweepSchedule s = sched;
  s.keep_states = true;
  if (backend == Backend::Gaussian) {
    RunReport report = solve(p, init_gaussian_state(p, init, grid), s);
    ProductState final_state = to_grid(report.gaussian_states.back(), grid);
    return {std::move(report), std::move(final_state)};
  }
  RunReport report = solve(p, init_state(p, init, grid), s, grid);
  ProductState final_state = report.states.back();
  return {std::move(report), std::move(final_state)};
}

void write_outputs(const fs::path& out_dir, const RunConfig& cfg, const RunOutputs& run) {
  fs::create_directories(out_dir);
  write_state_file(out_dir / cfg.state_name, run.final_state);
  write_file_atomic(out_dir / cfg.report_name,
                    report_to_json(run.report, cfg.echo, cfg.state_name).dump(2) + "\n");
}

void summarize(std::ostream& out, const RunReport& report) {
  const auto& last = report.records.back();
  out << "termination: " << to_string(report.termination) << " after " << last.sweep
      << " sweeps, residual " << std::setprecision(3) << std::scientific << last.residual
      << ", gap " << last.gap << std::defaultfloat << "\n";
}

}  // namespace

RegressionPrior PriorConfig::build() const {
  if (name == "gaussian") return RegressionPrior::gaussian(precision);
  if (name == "custom") return RegressionPrior::log_cosh_well(scale, well);
  throw Error(ErrorCode::ParseError, "unknown prior '" + name + "' (expected gaussian|custom)");
}

Json PriorConfig::to_json() const {
  if (name == "gaussian") return {{"name", name}, {"params", {{"precision", precision}}}};
  return {{"name", name}, {"params", {{"scale", scale}, {"well", well}}}};
}

RunConfig RunConfig::from_json(const Json& j, const fs::path& base_dir) {
  return config_guard([&] {
    RunConfig cfg;
    cfg.echo = j;

    const Json& t = j.at("target");
    const auto type = t.at("type").get<std::string>();
    if (type == "quadratic") {
      cfg.target.kind = TargetConfig::Kind::Quadratic;
      cfg.target.A = matrix_from_json(t.at("A"));
      cfg.target.m = vector_from_json(t.at("m"));
    } else if (type == "regression") {
      cfg.target.kind = TargetConfig::Kind::Regression;
      cfg.target.data_path = resolve(base_dir, t.at("data_path").get<std::string>());
      if (!fs::exists(cfg.target.data_path)) {
        throw Error(ErrorCode::FileNotFound, "data file " + cfg.target.data_path.string() + " not found");
      }
      cfg.target.sigma = t.at("sigma").get<double>();
      if (t.contains("prior")) {
        const Json& pr = t.at("prior");
        cfg.target.prior.name = pr.at("name").get<std::string>();
        const Json params = pr.value("params", Json::object());
        cfg.target.prior.precision = params.value("precision", 1.0);
        cfg.target.prior.scale = params.value("scale", 1.0);
        cfg.target.prior.well = params.value("well", 0.0);
        if (cfg.target.prior.name != "gaussian" && cfg.target.prior.name != "custom") {
          throw Error(ErrorCode::ParseError, "unknown prior '" + cfg.target.prior.name + "'");
        }
      }
    } else {
      throw Error(ErrorCode::ParseError, "unknown target type '" + type + "'");
    }

    if (j.contains("backend")) {
      const Json& b = j.at("backend");
      cfg.backend = backend_from_string(b.at("type").get<std::string>());
      if (cfg.backend == Backend::Grid) cfg.grid.n_nodes = b.value("n_nodes", cfg.grid.n_nodes);
    }
    if (cfg.backend == Backend::Gaussian && cfg.target.kind == TargetConfig::Kind::Regression &&
        cfg.target.prior.name != "gaussian") {
      throw Error(ErrorCode::BackendMismatch, "gaussian backend needs a quadratic target");
    }

    if (j.contains("schedule")) {
      const Json& s = j.at("schedule");
      cfg.schedule.mode = sweep_mode_from_string(s.value("mode", std::string("sequential")));
      cfg.schedule.sweeps = s.value("sweeps", cfg.schedule.sweeps);
      cfg.schedule.tol = s.value("tol", cfg.schedule.tol);
    }
    cfg.schedule.validate();

    if (j.contains("init")) {
      const Json& in = j.at("init");
      const auto kind = in.at("kind").get<std::string>();
      if (kind == "standard_gaussian") {
        cfg.init = InitSpec::standard_gaussian();
      } else if (kind == "narrow_at_point") {
        cfg.init = InitSpec::narrow_at(in.at("point").get<std::vector<double>>());
      } else if (kind == "from_file") {
        const fs::path path = resolve(base_dir, in.at("path").get<std::string>());
        if (!fs::exists(path)) throw Error(ErrorCode::FileNotFound, "init file " + path.string() + " not found");
        cfg.init = InitSpec::from_file(path.string());
      } else {
        throw Error(ErrorCode::ParseError, "unknown init kind '" + kind + "'");
      }
    }

    if (j.contains("output")) {
      const Json& o = j.at("output");
      cfg.report_name = o.value("report", cfg.report_name);
      cfg.state_name = o.value("final_state", cfg.state_name);
    }
    return cfg;
  });
}

Potential RunConfig::build_potential() const {
  if (target.kind == TargetConfig::Kind::Quadratic) return Potential::quadratic(target.A, target.m);
  const RegressionData data = read_regression_csv(target.data_path);
  if (backend == Backend::Gaussian) {
    return regression_as_quadratic(data.y, data.X, target.sigma, target.prior.precision);
  }
  return Potential::regression(data.y, data.X, target.sigma, target.prior.build());
}

int cmd_run(const fs::path& config_path, const fs::path& out_dir, std::ostream& out,
            std::ostream& err) {
  try {
    const RunConfig cfg =
        RunConfig::from_json(read_json_file(config_path), config_path.parent_path());
    const Potential p = cfg.build_potential();
    const RunOutputs run = execute(p, cfg.backend, cfg.init, cfg.schedule, cfg.grid);
    write_outputs(out_dir, cfg, run);
    summarize(out, run.report);
    return exit_for(run.report.termination);
  } catch (const Error& e) {
    err << "cavi-mf run: " << e.what() << "\n";
    return kUsageOrIoError;
  } catch (const fs::filesystem_error& e) {
    err << "cavi-mf run: " << e.what() << "\n";
    return kUsageOrIoError;
  }
}

int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const RunReport report = report_from_json(read_json_file(opts.report));
    CertificateConstants constants = CertificateConstants::of(report.potential);
    if (opts.lambda) constants.lambda = *opts.lambda;
    if (opts.lipschitz) constants.lipschitz = *opts.lipschitz;
    const Slack slack = Slack::from_environment();
    if (opts.kinds.empty()) throw Error(ErrorCode::InvalidArgument, "no certificate kinds requested");

    Json certs = Json::array();
    bool all_pass = true;
    for (const auto& name : opts.kinds) {
      const Certificate c = rate_certificate(report, certificate_kind_from_string(name), constants, slack);
      all_pass = all_pass && c.pass;
      out << (c.pass ? "PASS " : "FAIL ") << to_string(c.kind) << "  rows=" << c.rows.size()
          << "  max_violation=" << std::setprecision(3) << std::scientific << c.max_violation
          << std::defaultfloat;
      if (c.violating_sweep) out << "  first_violation=sweep " << *c.violating_sweep;
      out << "\n";
      certs.push_back(certificate_to_json(c));
    }
    const fs::path target = opts.out ? *opts.out : opts.report.parent_path() / "certificates.json";
    write_file_atomic(target, Json{{"report", opts.report.filename().string()},
                                   {"all_pass", all_pass},
                                   {"certificates", std::move(certs)}}
                                      .dump(2) +
                                  "\n");
    return all_pass ? kOk : kCertificateFailed;
  } catch (const Error& e) {
    err << "cavi-mf verify: " << e.what() << "\n";
    return kUsageOrIoError;
  }
}

int cmd_regress(const RegressOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    if (!(opts.sigma > 0.0) || !std::isfinite(opts.sigma)) {
      throw Error(ErrorCode::NonPositiveSigma, "--sigma must be positive");
    }
    const RegressionData data = read_regression_csv(opts.data);
    const Potential p = Potential::regression(data.y, data.X, opts.sigma, opts.prior.build());

    RunConfig cfg;
    cfg.backend = Backend::Grid;
    cfg.grid = opts.grid;
    cfg.schedule = opts.schedule;
    cfg.echo = {{"command", "regress"},
                {"data", opts.data.filename().string()},
                {"sigma", opts.sigma},
                {"prior", opts.prior.to_json()},
                {"backend", {{"type", "grid"}, {"n_nodes", opts.grid.n_nodes}}},
                {"schedule",
                 {{"mode", "sequential"}, {"sweeps", opts.schedule.sweeps}, {"tol", opts.schedule.tol}}}};
    const RunOutputs run = execute(p, cfg.backend, InitSpec::standard_gaussian(), cfg.schedule, cfg.grid);
    write_outputs(opts.out_dir, cfg, run);

    Json coefficients = Json::array();
    for (std::size_t i = 0; i < run.final_state.dim(); ++i) {
      const GridMarginal& mu = run.final_state[i];
      coefficients.push_back({{"name", data.features[i]},
                              {"mean", mu.mean()},
                              {"std", std::sqrt(mu.variance())},
                              {"q05", mu.quantile(0.05)},
                              {"q95", mu.quantile(0.95)}});
    }
    const Json posterior = {{"lambda", p.lambda()},
                            {"lipschitz", *p.lipschitz()},
                            {"observations", data.y.size()},
                            {"coefficients", std::move(coefficients)}};
    write_file_atomic(opts.out_dir / "posterior.json", posterior.dump(2) + "\n");
    summarize(out, run.report);
    out << "lambda = " << p.lambda() << ", L = " << *p.lipschitz() << "\n";
    return exit_for(run.report.termination);
  } catch (const Error& e) {
    err << "cavi-mf regress: " << e.what() << "\n";
    return kUsageOrIoError;
  } catch (const fs::filesystem_error& e) {
    err << "cavi-mf regress: " << e.what() << "\n";
    return kUsageOrIoError;
  }
}

int main(int argc, char** argv) {
  CLI::App app{"Sequential mean-field CAVI on log-concave targets, with convergence certificates"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  auto* run = app.add_subcommand("run", "Run CAVI from a JSON config");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory");

  VerifyOptions verify_opts;
  std::string report_path;
  std::string kinds_csv;
  std::string cert_out;
  double lambda = 0.0;
  double lipschitz = 0.0;
  auto* verify = app.add_subcommand("verify", "Check convergence certificates against a report");
  verify->add_option("--report", report_path, "Report JSON written by run/regress")->required();
  verify->add_option("--kinds", kinds_csv,
                     "Comma list of monotone,linear,exponential,w2lower,gaussian-dimfree")
      ->required();
  auto* lambda_opt = verify->add_option("--lambda", lambda, "Override the strong-convexity constant");
  auto* lipschitz_opt = verify->add_option("--lipschitz", lipschitz, "Override the gradient Lipschitz constant");
  auto* cert_out_opt = verify->add_option("--out", cert_out, "Certificates JSON (default: next to the report)");

  RegressOptions reg;
  std::string data_path;
  std::string reg_out = ".";
  std::string prior_name = "gaussian";
  auto* regress = app.add_subcommand("regress", "Mean-field posterior for Bayesian linear regression");
  regress->add_option("--data", data_path, "CSV: header, y first, then features")->required();
  regress->add_option("--sigma", reg.sigma, "Noise standard deviation")->required();
  regress->add_option("--prior", prior_name, "gaussian|custom")->check(CLI::IsMember({"gaussian", "custom"}));
  regress->add_option("--prior-precision", reg.prior.precision, "Gaussian prior precision");
  regress->add_option("--prior-scale", reg.prior.scale, "custom prior: quadratic scale");
  regress->add_option("--prior-well", reg.prior.well, "custom prior: log-cosh well depth");
  regress->add_option("--n-nodes", reg.grid.n_nodes, "Grid nodes per coordinate");
  regress->add_option("--sweeps", reg.schedule.sweeps, "Maximum sweeps");
  regress->add_option("--tol", reg.schedule.tol, "Mean-field residual tolerance");
  regress->add_option("--out", reg_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageOrIoError;
  }

  if (*run) return cmd_run(config_path, out_dir, std::cout, std::cerr);
  if (*verify) {
    verify_opts.report = report_path;
    std::stringstream ss(kinds_csv);
    for (std::string k; std::getline(ss, k, ',');) {
      if (!k.empty()) verify_opts.kinds.push_back(k);
    }
    if (*lambda_opt) verify_opts.lambda = lambda;
    if (*lipschitz_opt) verify_opts.lipschitz = lipschitz;
    if (*cert_out_opt) verify_opts.out = cert_out;
    return cmd_verify(verify_opts, std::cout, std::cerr);
  }
  reg.data = data_path;
  reg.out_dir = reg_out;
  reg.prior.name = prior_name;
  return cmd_regress(reg, std::cout, std::cerr);
}

}  // namespace cavi::cli
