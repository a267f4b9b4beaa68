#include "commands.hpp"

#include "pstarmax/error.hpp"
#include "pstarmax/estimate.hpp"
#include "pstarmax/forecast.hpp"
#include "pstarmax/inference.hpp"
#include "pstarmax/io.hpp"
#include "pstarmax/simulate.hpp"
#include "pstarmax/spatial_weights.hpp"
#include "pstarmax/study.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pstarmax::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open '" + path + "'");
  return in;
}

WeightMatrixSet load_weights(const std::string& path) {
  auto in = open_in(path);
  return io::read_weights_csv(in);
}

CountPanel load_counts(const std::string& path) {
  auto in = open_in(path);
  return io::read_counts_csv(in);
}

std::optional<CovariatePanel> load_covariates(const std::string& path) {
  if (path.empty()) return std::nullopt;
  auto in = open_in(path);
  return io::read_covariates_csv(in);
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    io::write_text(path, text);
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// weights

struct WeightsBuildArgs {
  std::string kind;
  int n = 0;
  std::string adjacency;
  int order = 1;
  std::string out;
};

int weights_build(const WeightsBuildArgs& a) {
  WeightMatrixSet w;
  if (a.kind == "grid4nn") {
    require(a.n >= 2, ErrorKind::precondition, "--n must be at least 2");
    w = build_grid_4nn({a.n});
  } else if (a.kind == "grid-directional" || a.kind == "grid_directional") {
    require(a.n >= 2, ErrorKind::precondition, "--n must be at least 2");
    w = build_grid_directional({a.n});
  } else {
    require(!a.adjacency.empty(), ErrorKind::precondition, "--kind adjacency needs --adjacency FILE");
    auto in = open_in(a.adjacency);
    w = from_adjacency(io::read_adjacency_csv(in), a.order);
  }
  std::ostringstream ss;
  io::write_weights_csv(ss, w);
  emit(a.out, ss.str());
  spdlog::info("wrote {} weight matrices for p = {}", w.size(), w.p());
  return kOk;
}

int weights_validate(const std::string& path, bool allow_empty_rows) {
  const auto w = load_weights(path);
  WeightValidationOptions opts;
  opts.allow_empty_rows = allow_empty_rows;
  const auto report = validate(w, opts);
  std::cout << dump(io::to_json(report));
  return report.ok() ? kOk : kValidation;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string model, weights, theta, covariates, copula, out, intensity_out;
  Index T = 0;
  std::optional<std::uint64_t> seed;
  int burn_in = 100;
};

int simulate(const SimulateArgs& a) {
  require(a.seed.has_value(), ErrorKind::precondition, "--seed is required");
  const auto spec = io::model_spec_from_json(io::read_json(a.model));
  const auto theta = io::parameter_vector_from_json(io::read_json(a.theta));
  const auto w = load_weights(a.weights);
  const auto x = load_covariates(a.covariates);
  SimulationConfig cfg;
  cfg.T = a.T;
  cfg.seed = *a.seed;
  cfg.burn_in = a.burn_in;
  if (!a.copula.empty()) cfg.copula = io::copula_from_json(io::read_json(a.copula));
  const auto sim = simulate_path(theta, spec, w, x ? &*x : nullptr, cfg);
  std::ostringstream counts;
  io::write_panel_csv(counts, sim.counts.values());
  emit(a.out, counts.str());
  if (!a.intensity_out.empty()) {
    std::ostringstream lambda;
    io::write_panel_csv(lambda, sim.intensity);
    io::write_text(a.intensity_out, lambda.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string model, weights, data, covariates, init = "first-obs", criterion = "coefficient_sum", out;
  int multistart = 1;
  std::uint64_t seed = 0;
  int max_iterations = 500;
  double tolerance = 1e-8;
};

int fit_command(const FitArgs& a) {
  const auto spec = io::model_spec_from_json(io::read_json(a.model));
  const auto w = load_weights(a.weights);
  const auto y = load_counts(a.data);
  const auto x = load_covariates(a.covariates);
  FitConfig cfg;
  cfg.init = parse_init(a.init);
  require(cfg.init != InitStrategy::supplied, ErrorKind::precondition, "--init supplied is not available here");
  cfg.criterion = parse_criterion(a.criterion);
  cfg.multistart = a.multistart;
  cfg.multistart_seed = a.seed;
  cfg.max_iterations = a.max_iterations;
  cfg.gradient_tolerance = a.tolerance;
  const auto result = fit(spec, w, y, x ? &*x : nullptr, cfg);
  if (!result.converged) spdlog::warn("optimizer did not converge: {}", result.message);
  emit(a.out, dump(io::to_json(result)));
  return kOk;
}

// ---------------------------------------------------------------------------
// test

struct TestArgs {
  std::string fit, out;
  std::vector<std::string> params;
  std::vector<std::string> contrast;
};

Index parameter_index(const FitResult& f, const std::string& token) {
  const auto names = ParameterLayout(f.spec, f.p).names();
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == token) return static_cast<Index>(k);
  std::size_t used = 0;
  long long k = -1;
  try {
    k = std::stoll(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == token.size() && k >= 0 && k < f.theta.size(), ErrorKind::precondition,
          "unknown parameter '" + token + "'");
  return static_cast<Index>(k);
}

int test_command(const TestArgs& a) {
  const auto f = io::fit_result_from_json(io::read_json(a.fit));
  require(a.params.empty() != a.contrast.empty(), ErrorKind::precondition,
          "give either --param or --contrast C.csv c0.csv");
  WaldResult r;
  if (!a.params.empty()) {
    std::vector<Index> idx;
    for (const auto& p : a.params) idx.push_back(parameter_index(f, p));
    r = boundary_test(f, idx);
  } else {
    auto cin = open_in(a.contrast[0]);
    auto rin = open_in(a.contrast[1]);
    const Eigen::MatrixXd c = io::read_matrix_csv(cin);
    const Eigen::MatrixXd c0 = io::read_matrix_csv(rin);
    require(c0.rows() == 1 || c0.cols() == 1, ErrorKind::precondition, "c0 must be a vector");
    r = wald_test(f, c, Eigen::Map<const Eigen::VectorXd>(c0.data(), c0.size()));
  }
  emit(a.out, dump(io::to_json(r)));
  return kOk;
}

// ---------------------------------------------------------------------------
// forecast

struct ForecastArgs {
  std::string fit, weights, data, covariates, out, metrics_out;
  std::optional<Index> split;
};

int forecast_command(const ForecastArgs& a) {
  const auto f = io::fit_result_from_json(io::read_json(a.fit));
  const auto w = load_weights(a.weights);
  const auto y = load_counts(a.data);
  const auto x = load_covariates(a.covariates);
  const Index first = a.split.value_or(f.spec.first_time());
  const auto rf = rolling_forecast(f, w, y, x ? &*x : nullptr, first);
  const Eigen::MatrixXd obs = y.values().rightCols(rf.lambda.cols());

  std::ostringstream csv;
  csv.precision(17);
  csv << "t,location,y,lambda_hat\n";
  for (Index j = 0; j < rf.lambda.cols(); ++j)
    for (Index i = 0; i < rf.lambda.rows(); ++i)
      csv << first + j << ',' << i + 1 << ',' << obs(i, j) << ',' << rf.lambda(i, j) << '\n';
  emit(a.out, csv.str());

  json metrics{{"first", first},
               {"cells", obs.size()},
               {"mspe", mspe(obs, rf.lambda)},
               {"mae", mae(obs, rf.lambda)}};
  try {
    metrics["explained_deviance"] = explained_deviance(obs, rf.lambda);
  } catch (const Error& e) {
    metrics["explained_deviance"] = nullptr;
    spdlog::warn("{}", e.what());
  }
  const std::string text = dump(metrics);
  if (a.metrics_out.empty()) {
    if (a.out.empty() || a.out == "-") {
      std::cerr << text;
    } else {
      std::cout << text;
    }
  } else {
    io::write_text(a.metrics_out, text);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// study

struct StudyArgs {
  std::string plan, out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool timing = false;
};

int study_run(const StudyArgs& a) {
  require(a.seed.has_value(), ErrorKind::precondition, "--seed is required");
  auto j = io::read_json(a.plan);
  j["seed"] = *a.seed;
  StudyPlan plan = study_plan_from_json(j);
  fs::create_directories(a.out);
  RunOptions opts;
  opts.jobs = a.jobs;
  opts.record_timing = a.timing;
  const fs::path dir(a.out);
  io::write_text(dir / "plan.json", dump(to_json(plan)));
  if (plan.grid) {
    spdlog::info("power curve over {} values of {}", plan.grid->values.size(), plan.grid->parameter);
    const auto curve = power_curve(plan, *plan.grid, opts);
    io::write_text(dir / "power_curve.json", dump(to_json(curve)));
    std::ostringstream csv;
    write_power_curve_csv(csv, curve);
    io::write_text(dir / "power_curve.csv", csv.str());
    return kOk;
  }
  spdlog::info("running {} replicates at {} sample sizes", plan.replicates, plan.T.size());
  const auto report = run_study(plan, opts);
  io::write_text(dir / "report.json", dump(to_json(report)));
  std::ostringstream fits, tests;
  write_fit_records_csv(fits, report);
  write_test_records_csv(tests, report);
  io::write_text(dir / "fits.csv", fits.str());
  io::write_text(dir / "tests.csv", tests.str());
  return kOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
      return kValidation;
    case ErrorKind::numerical:
      return kNumerical;
    case ErrorKind::precondition:
    case ErrorKind::unsupported:
    case ErrorKind::io:
      return kUsage;
  }
  return kUsage;
}

std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
      return "validation";
    case ErrorKind::precondition:
      return "precondition";
    case ErrorKind::numerical:
      return "numerical";
    case ErrorKind::unsupported:
      return "unsupported";
    case ErrorKind::io:
      return "io";
  }
  return "error";
}

int report_error(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << '\n';
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Poisson space-time ARMA models with covariates"};
  app.require_subcommand(1);
  std::function<int()> action;

  auto* weights = app.add_subcommand("weights", "Build or validate spatial weight matrices");
  weights->require_subcommand(1);
  WeightsBuildArgs wb;
  auto* build = weights->add_subcommand("build", "Write a weight CSV");
  build->add_option("--kind", wb.kind, "grid4nn, grid-directional or adjacency")
      ->required()
      ->check(CLI::IsMember({"grid4nn", "grid-directional", "grid_directional", "adjacency"}));
  build->add_option("--n", wb.n, "grid side length");
  build->add_option("--adjacency", wb.adjacency, "CSV with location,neighbor pairs (1-based)");
  build->add_option("--order", wb.order, "highest neighbourhood order for adjacency input")->check(CLI::Range(1, 2));
  build->add_option("--out", wb.out, "output file (default stdout)");
  build->callback([&] { action = [&] { return weights_build(wb); }; });

  std::string validate_path;
  bool allow_empty = false;
  auto* val = weights->add_subcommand("validate", "Check weight matrix invariants");
  val->add_option("file", validate_path, "weight CSV")->required();
  val->add_flag("--allow-empty-rows", allow_empty, "accept all-zero rows");
  val->callback([&] { action = [&] { return weights_validate(validate_path, allow_empty); }; });

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a count panel");
  sim->add_option("--model", sa.model, "model spec JSON")->required();
  sim->add_option("--weights", sa.weights, "weight CSV")->required();
  sim->add_option("--theta", sa.theta, "parameter JSON")->required();
  sim->add_option("--T", sa.T, "last time index")->required()->check(CLI::PositiveNumber);
  sim->add_option("--seed", sa.seed, "random seed");
  sim->add_option("--covariates", sa.covariates, "covariate CSV covering t = 0..T");
  sim->add_option("--copula", sa.copula, "copula JSON {family, parameter}");
  sim->add_option("--burn-in", sa.burn_in, "discarded initial steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--out", sa.out, "count CSV (default stdout)");
  sim->add_option("--intensity-out", sa.intensity_out, "intensity CSV");
  sim->callback([&] { action = [&] { return simulate(sa); }; });

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Quasi-maximum-likelihood fit");
  fit->add_option("--model", fa.model, "model spec JSON")->required();
  fit->add_option("--weights", fa.weights, "weight CSV")->required();
  fit->add_option("--data", fa.data, "count CSV")->required();
  fit->add_option("--covariates", fa.covariates, "covariate CSV");
  fit->add_option("--init", fa.init, "first-obs, global-mean or zero")
      ->check(CLI::IsMember({"first-obs", "first_obs", "global-mean", "global_mean", "zero"}));
  fit->add_option("--criterion", fa.criterion, "coefficient_sum or tau_adjusted");
  fit->add_option("--multistart", fa.multistart, "number of starts")->check(CLI::PositiveNumber);
  fit->add_option("--seed", fa.seed, "seed for perturbed starts");
  fit->add_option("--max-iterations", fa.max_iterations, "iteration limit")->check(CLI::PositiveNumber);
  fit->add_option("--tolerance", fa.tolerance, "projected-gradient tolerance")->check(CLI::PositiveNumber);
  fit->add_option("--out", fa.out, "fit JSON (default stdout)");
  fit->callback([&] { action = [&] { return fit_command(fa); }; });

  TestArgs ta;
  auto* test = app.add_subcommand("test", "Wald tests on a fitted model");
  test->add_option("--fit", ta.fit, "fit JSON")->required();
  test->add_option("--param", ta.params, "parameter name or index; repeat for a joint test");
  test->add_option("--contrast", ta.contrast, "C.csv c0.csv")->expected(2);
  test->add_option("--out", ta.out, "result JSON (default stdout)");
  test->callback([&] { action = [&] { return test_command(ta); }; });

  ForecastArgs fo;
  auto* fc = app.add_subcommand("forecast", "One-step-ahead predictions and metrics");
  fc->add_option("--fit", fo.fit, "fit JSON")->required();
  fc->add_option("--weights", fo.weights, "weight CSV")->required();
  fc->add_option("--data", fo.data, "count CSV")->required();
  fc->add_option("--covariates", fo.covariates, "covariate CSV");
  fc->add_option("--test-split", fo.split, "first predicted time index");
  fc->add_option("--out", fo.out, "prediction CSV (default stdout)");
  fc->add_option("--metrics-out", fo.metrics_out, "metrics JSON");
  fc->callback([&] { action = [&] { return forecast_command(fo); }; });

  StudyArgs st;
  auto* study = app.add_subcommand("study", "Monte Carlo studies");
  study->require_subcommand(1);
  auto* srun = study->add_subcommand("run", "Run a study plan");
  srun->add_option("plan", st.plan, "plan JSON")->required();
  srun->add_option("--out", st.out, "report directory")->required();
  srun->add_option("--seed", st.seed, "master seed (overrides the plan)");
  srun->add_option("--jobs", st.jobs, "worker threads")->check(CLI::PositiveNumber);
  srun->add_flag("--timing", st.timing, "record per-fit wall-clock times");
  srun->callback([&] { action = [&] { return study_run(st); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kUsage);
  }

  try {
    return action();
  } catch (const Error& e) {
    return report_error(kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), kUsage);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kNumerical);
  }
}

}  // namespace pstarmax::cli
