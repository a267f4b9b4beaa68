#pragma once

#include "pstarmax/likelihood.hpp"
#include "pstarmax/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pstarmax {

struct FitConfig {
  InitStrategy init = InitStrategy::first_obs;
  std::optional<Eigen::MatrixXd> supplied_init;  ///< used with InitStrategy::supplied
  StationarityCriterion criterion = StationarityCriterion::coefficient_sum;
  double slack = 1e-6;
  double gradient_tolerance = 1e-8;
  int max_iterations = 500;
  int multistart = 1;
  std::uint64_t multistart_seed = 0;
  double log_linear_box = 10.0;
  /// Include the design-matrix rank check in the identifiability pre-flight.
  bool check_design_rank = true;
  std::optional<Eigen::VectorXd> start;  ///< packed start; projected onto the feasible set

  void check() const;
};

struct FitResult {
  ModelSpec spec;
  Index p = 0;
  Index n_obs = 0;  ///< time points entering the likelihood
  InitStrategy init = InitStrategy::first_obs;
  StationarityCriterion criterion = StationarityCriterion::coefficient_sum;
  ParameterVector theta_hat;
  Eigen::VectorXd theta;       ///< packed theta_hat
  Eigen::MatrixXd covariance;  ///< H^{-1} G H^{-1} / n_obs
  Eigen::VectorXd std_errors;
  Eigen::MatrixXd H;
  Eigen::MatrixXd G;
  double loglik = 0.0;
  double qic = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  ///< projected gradient of the per-cell objective at theta_hat
  std::vector<Index> active_constraints;
  bool sum_constraint_active = false;
  std::string fingerprint;  ///< of the count panel the model was fitted to
  std::string message;
};

/// Stationarity and sign constraints of `spec` as lower/upper bounds plus the coefficient sum bound.
struct FeasibleSet {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<Index> summed;
  double sum_bound = 1.0;
};
FeasibleSet feasible_set(const ModelSpec& spec, const WeightMatrixSet& w, const FitConfig& cfg);

/// Starting values whose implied stationary mean matches the sample mean.
ParameterVector default_start(const ModelSpec& spec, const WeightMatrixSet& w, const CountPanel& y);

/// Constrained quasi-maximum-likelihood fit with sandwich standard errors.
FitResult fit(const ModelSpec& spec, const WeightMatrixSet& w, const CountPanel& y, const CovariatePanel* x,
              const FitConfig& cfg = {});

}  // namespace pstarmax
