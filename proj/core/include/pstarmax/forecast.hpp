#pragma once

#include "pstarmax/estimate.hpp"

#include <Eigen/Dense>

#include <optional>

namespace pstarmax {

/// lambda_{T+1} given Y_0..Y_T and, for models with covariates, X up to T+1. The filter starts
/// with the fit's init strategy unless `options` overrides it.
Eigen::VectorXd one_step_forecast(const FitResult& fit, const WeightMatrixSet& w, const CountPanel& history,
                                  const CovariatePanel* x = nullptr,
                                  const std::optional<FilterOptions>& options = std::nullopt);

/// Running one-step predictions with theta fixed at the fitted value. Column j of `lambda`
/// predicts Y at time first + j using observations up to first + j - 1.
struct RollingForecast {
  Index first = 0;
  Eigen::MatrixXd lambda;
};
RollingForecast rolling_forecast(const FitResult& fit, const WeightMatrixSet& w, const CountPanel& y,
                                 const CovariatePanel* x, Index first);

/// Mean squared prediction error over columns t >= r_burn.
double mspe(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda, Index r_burn = 0);
double mae(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda);
/// 1 - D(lambda) / D(ybar) with Poisson deviances against the saturated model (0 log 0 = 0).
double explained_deviance(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda);
/// |theta_hat - theta|^2 / K.
double mse_params(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true);

}  // namespace pstarmax
