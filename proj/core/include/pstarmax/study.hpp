#pragma once

#include "pstarmax/estimate.hpp"
#include "pstarmax/model.hpp"
#include "pstarmax/simulate.hpp"
#include "pstarmax/spatial_weights.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pstarmax {

enum class StudyKind { initialization, size, power, anisotropy, copula, intercept_misspec, link_misspec };
std::string_view to_string(StudyKind kind) noexcept;
StudyKind parse_study_kind(std::string_view s);

/// Grid weight sets used by the studies: [I, W_4NN] or [I, W_NS, W_WE].
enum class WeightKind { grid4nn, grid_directional };
std::string_view to_string(WeightKind kind) noexcept;
WeightKind parse_weight_kind(std::string_view s);
WeightMatrixSet build_weights(WeightKind kind, int n);

struct GeneratorSpec {
  ModelSpec spec;
  ParameterVector theta;
  WeightKind weights = WeightKind::grid4nn;
  int grid = 9;
  CopulaSpec copula;
  int burn_in = 100;
  ArmaCovariateConfig covariate;
};

/// first_obs, global_mean and zero map to the filter strategies; true_value starts the filter
/// at the generator's intensities, transformed to the fitted link.
enum class FitInit { first_obs, global_mean, zero, true_value };
std::string_view to_string(FitInit init) noexcept;
FitInit parse_fit_init(std::string_view s);

struct FittedModel {
  std::string name;
  ModelSpec spec;
  WeightKind weights = WeightKind::grid4nn;
  FitInit init = FitInit::first_obs;
};

/// boundary: single_param_test / boundary_test; plain: unadjusted Wald test of the named
/// parameters being zero; contrast: Wald test of rows . theta = rhs.
enum class TestKind { boundary, plain, contrast };
std::string_view to_string(TestKind kind) noexcept;
TestKind parse_test_kind(std::string_view s);

struct TestSpec {
  std::string name;
  std::string model;  ///< name of a FittedModel
  TestKind kind = TestKind::boundary;
  std::vector<std::string> parameters;                 ///< boundary and plain
  std::vector<std::map<std::string, double>> rows;     ///< contrast
  std::vector<double> rhs;                             ///< contrast
};

/// One generator parameter varied over `values`, everything else fixed.
struct ParameterGrid {
  std::string parameter;
  std::vector<double> values;
};

struct StudyPlan {
  StudyKind kind = StudyKind::initialization;
  GeneratorSpec generator;
  std::vector<Index> T{250};
  std::vector<FittedModel> fits;
  std::vector<TestSpec> tests;
  int replicates = 100;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  FitConfig fit_config;
  std::optional<ParameterGrid> grid;

  /// Throws validation errors for unknown names, shape mismatches and empty lists.
  void check() const;
};

struct PresetOptions {
  Link link = Link::linear;
  std::vector<Index> T{250};
  int replicates = 100;
  std::uint64_t seed = 1;
  int grid = 9;
  CopulaSpec copula{CopulaFamily::clayton, 2.0};
  int lags = 1;               ///< (1,1) or (2,2) temporal orders
  bool covariate = true;      ///< initialization, size and power studies
  bool feedback = true;       ///< size and power: false drops the alpha terms
  std::string parameter = "gamma[1][0]";  ///< tested (size) or varied (power) parameter
  bool negative = false;      ///< link study: alpha01 = beta01 = -0.2 in the log-linear generator
  std::vector<double> grid_values;  ///< power; empty selects 11 points over the default range
};

/// Plans for the standard simulation settings.
StudyPlan preset_plan(StudyKind kind, const PresetOptions& options = {});

struct RunOptions {
  int jobs = 1;
  bool record_timing = false;
};

struct FitRecord {
  Index T = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string model;
  bool failed = false;
  std::string error;
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  double qic = 0.0;
  int qic_rank = 0;  ///< 1 = preferred; 0 when some fit of the replicate failed
  double mse = 0.0;  ///< over parameters shared with the generator; NaN when none are
  double mae = 0.0;
  double mspe = 0.0;
  Eigen::VectorXd theta;
  std::vector<std::string> names;
  double seconds = 0.0;
};

struct TestRecord {
  Index T = 0;
  int replicate = 0;
  std::string test;
  bool valid = false;
  std::string error;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

struct FitSummary {
  Index T = 0;
  std::string model;
  int n = 0;
  int failures = 0;
  int nonconverged = 0;
  double nonconvergence_rate = 0.0;  ///< (failures + nonconverged) / n
  double mean_mse = 0.0;
  double median_mse = 0.0;
  double mean_mae = 0.0;
  double mean_mspe = 0.0;
  double qic_preferred = 0.0;  ///< share of complete replicates where this fit ranks first
  std::map<std::string, double> mean_bias;
  double mean_seconds = 0.0;
};

struct TestSummary {
  Index T = 0;
  std::string test;
  int n = 0;  ///< valid tests
  int rejections = 0;
  double rate = 0.0;
  double std_error = 0.0;
};

struct StudyReport {
  StudyPlan plan;
  std::vector<FitRecord> fits;    ///< ordered by (T, replicate, fit)
  std::vector<TestRecord> tests;  ///< ordered by (T, replicate, test)
  std::vector<FitSummary> fit_summaries;
  std::vector<TestSummary> test_summaries;

  [[nodiscard]] const FitSummary& fit_summary(Index T, std::string_view model) const;
  [[nodiscard]] const TestSummary& test_summary(Index T, std::string_view test) const;
};

/// Seed of replicate i at sample size T.
std::uint64_t replicate_seed(std::uint64_t master, Index T, int replicate) noexcept;

/// The shared covariate panel of a plan (empty without covariates), covering t = 0..max T.
CovariatePanel study_covariates(const StudyPlan& plan);

/// Simulate, fit and test every replicate. Fit failures are counted, not thrown.
StudyReport run_study(const StudyPlan& plan, const RunOptions& options = {});
/// Summaries from replicate rows; run_study calls this.
void summarize(StudyReport& report);

struct PowerPoint {
  double value = 0.0;
  Index T = 0;
  std::string test;
  int n = 0;
  int rejections = 0;
  double rate = 0.0;
};

/// Rejection rates of each test over the grid, one run_study per grid value. Replicates use
/// the same seeds at every grid value.
std::vector<PowerPoint> power_curve(const StudyPlan& plan, const ParameterGrid& grid,
                                    const RunOptions& options = {});

/// Pool-adjacent-violators fit of a nondecreasing sequence.
std::vector<double> isotonic_regression(const std::vector<double>& y);

/// Eigenvalues of F_T = sum_t X_t' X_t with X_t = [1_p (I_p if inhomogeneous), W(l) X_k,t ...],
/// and the ratio sigma_max^0.5 log(sigma_max)^(0.5 eps) / sigma_min.
struct DesignGrowth {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double ratio = 0.0;
};
DesignGrowth covariate_growth(const ModelSpec& spec, const WeightMatrixSet& w, const CovariatePanel& x,
                              double epsilon = 1.01);

nlohmann::json to_json(const StudyPlan& plan);
/// Accepts a full plan or {"preset": kind, ...PresetOptions fields...}.
StudyPlan study_plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyReport& report);
nlohmann::json to_json(const std::vector<PowerPoint>& curve);
void write_fit_records_csv(std::ostream& out, const StudyReport& report);
void write_test_records_csv(std::ostream& out, const StudyReport& report);
void write_power_curve_csv(std::ostream& out, const std::vector<PowerPoint>& curve);

}  // namespace pstarmax
