#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace pstarmax::detail {

using Eigen::Index;

/// Feasible set { lower <= x <= upper, sum_{k in sum_set} |x_k| <= sum_bound }.
/// Every index in `sum_set` must have lower <= 0 <= upper.
struct Constraints {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<Index> sum_set;
  double sum_bound = 1.0;

  [[nodiscard]] double sum_abs(const Eigen::VectorXd& x) const;
  [[nodiscard]] bool feasible(const Eigen::VectorXd& x, double tol = 0.0) const;
  /// Euclidean projection.
  [[nodiscard]] Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  /// Projection in the metric diag(scale)^2, i.e. argmin sum_k scale_k^2 (x_k - v_k)^2.
  [[nodiscard]] Eigen::VectorXd project_scaled(const Eigen::VectorXd& v, const Eigen::VectorXd& scale) const;
};

/// Local quadratic model of the objective: value f, gradient g and a positive semidefinite B.
struct LocalModel {
  double f = 0.0;
  Eigen::VectorXd g;
  Eigen::MatrixXd B;
};

struct Objective {
  std::function<double(const Eigen::VectorXd&)> value;  ///< +inf outside the domain
  std::function<bool(const Eigen::VectorXd&, LocalModel&)> model;
};

struct OptimizerOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 500;
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double projected_gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// argmin over the constraint set of 0.5 (x - c)' B (x - c) + g' (x - c).
Eigen::VectorXd solve_qp(const Eigen::MatrixXd& B, const Eigen::VectorXd& g, const Eigen::VectorXd& center,
                         const Constraints& c);

/// Projected Newton-type minimisation with Armijo backtracking. x0 is projected first.
OptimizerResult minimize(const Objective& obj, const Constraints& c, const Eigen::VectorXd& x0,
                         const OptimizerOptions& options);

}  // namespace pstarmax::detail
