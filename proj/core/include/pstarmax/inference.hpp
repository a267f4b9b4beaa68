#pragma once

#include "pstarmax/estimate.hpp"

#include <Eigen/Dense>

#include <vector>

namespace pstarmax {

struct WaldResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool boundary_adjusted = false;
};

/// P(chi^2_df > x) via the regularised upper incomplete gamma function.
double chi2_upper_tail(double x, int df);

/// Wald test of C theta = c0 using the fit's sandwich covariance. No boundary correction.
WaldResult wald_test(const FitResult& fit, const Eigen::MatrixXd& C, const Eigen::VectorXd& c0);

/// Test of theta_k = 0. Linear link: one-sided alternative theta_k > 0 with the
/// 1/2 chi^2_0 + 1/2 chi^2_1 reference; log-linear: plain chi^2_1.
WaldResult single_param_test(const FitResult& fit, Index k);

/// Joint boundary test of theta_k = 0 for all k in `indices`. Only the single-parameter
/// case is implemented; more indices on the linear link raise an unsupported error.
WaldResult boundary_test(const FitResult& fit, const std::vector<Index>& indices);

/// -2 loglik + 2 trace(G H^{-1}).
double qic(double loglik, const Eigen::MatrixXd& H, const Eigen::MatrixXd& G);
double qic(const FitResult& fit);

struct RankedModel {
  std::size_t index = 0;  ///< position in the input list
  double qic = 0.0;
  Index parameters = 0;
};

/// Ascending QIC; ties (|difference| < 1e-9) go to fewer parameters, then input order.
/// All fits must carry the same dataset fingerprint.
std::vector<RankedModel> compare_models(const std::vector<FitResult>& fits);

}  // namespace pstarmax
