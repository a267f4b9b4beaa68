#include "pstarmax/forecast.hpp"

#include "pstarmax/error.hpp"
#include "recursion.hpp"

#include <cmath>
#include <string>

namespace pstarmax {

namespace {

void check_aligned(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda) {
  require(y.rows() == lambda.rows() && y.cols() == lambda.cols(), ErrorKind::precondition,
          "observations and predictions are not aligned");
  require(y.size() > 0, ErrorKind::precondition, "no cells to evaluate");
}

// Poisson log-likelihood without the log(y!) term, 0 log 0 = 0.
double poisson_kernel(double y, double mu) {
  if (y == 0.0) return -mu;
  return y * std::log(mu) - mu;
}

}  // namespace

Eigen::VectorXd one_step_forecast(const FitResult& fit, const WeightMatrixSet& w, const CountPanel& history,
                                  const CovariatePanel* x, const std::optional<FilterOptions>& options) {
  const ModelSpec& spec = fit.spec;
  const Index p = w.p();
  require(history.p() == p, ErrorKind::precondition, "history does not match the weights");
  const Index T = history.T();
  const Index t0 = spec.first_time();
  require(T + 1 >= t0, ErrorKind::precondition,
          "insufficient observations: forecasting needs at least " + std::to_string(t0) + " time points");
  if (spec.m() > 0)
    require(x != nullptr && x->m() == spec.m() && x->p() == p && x->T() >= T + 1, ErrorKind::precondition,
            "missing covariate values for the forecast time");

  Eigen::MatrixXd eta;
  FilterOptions opts;
  opts.init = fit.init == InitStrategy::supplied ? InitStrategy::first_obs : fit.init;
  if (options) opts = *options;
  if (T >= t0) {
    eta = QuasiLikelihood(spec, w, history, x, opts).filter(fit.theta).predictor;
  } else {
    eta = initial_predictor(spec, history, opts);
  }

  const bool linear = spec.link == Link::linear;
  std::vector<Eigen::VectorXd> eta_lags, z_lags, xs;
  for (int i = 1; i <= spec.q(); ++i) eta_lags.emplace_back(eta.col(T + 1 - i));
  for (int j = 1; j <= spec.r(); ++j) {
    const Eigen::VectorXd yj = history.values().col(T + 1 - j);
    z_lags.push_back(linear ? yj : Eigen::VectorXd(yj.array().log1p()));
  }
  for (int k = 0; k < spec.m(); ++k) xs.emplace_back(x->process(k).col(T + 1));

  Eigen::MatrixXd r(p, detail::regressor_count(spec));
  detail::fill_regressors(
      spec, w, [&](int i) -> const Eigen::VectorXd& { return eta_lags[static_cast<std::size_t>(i - 1)]; },
      [&](int j) -> const Eigen::VectorXd& { return z_lags[static_cast<std::size_t>(j - 1)]; },
      [&](int k) -> const Eigen::VectorXd* { return &xs[static_cast<std::size_t>(k)]; }, r);
  Eigen::VectorXd out(p);
  detail::linear_predictor(fit.theta, spec.intercept_size(p), r, out);
  if (!linear) out = out.array().exp();
  return out;
}

RollingForecast rolling_forecast(const FitResult& fit, const WeightMatrixSet& w, const CountPanel& y,
                                 const CovariatePanel* x, Index first) {
  const Index t0 = fit.spec.first_time();
  require(first >= t0 && first <= y.T(), ErrorKind::precondition,
          "test window must start between " + std::to_string(t0) + " and T");
  FilterOptions opts;
  opts.init = fit.init == InitStrategy::supplied ? InitStrategy::first_obs : fit.init;
  const auto state = QuasiLikelihood(fit.spec, w, y, x, opts).filter(fit.theta);
  RollingForecast out;
  out.first = first;
  out.lambda = state.intensity.rightCols(y.T() - first + 1);
  return out;
}

double mspe(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda, Index r_burn) {
  check_aligned(y, lambda);
  require(r_burn >= 0 && r_burn < y.cols(), ErrorKind::precondition, "burn-in leaves no cells");
  const Index n = y.cols() - r_burn;
  return (y.rightCols(n) - lambda.rightCols(n)).squaredNorm() / static_cast<double>(y.rows() * n);
}

double mae(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda) {
  check_aligned(y, lambda);
  return (y - lambda).cwiseAbs().sum() / static_cast<double>(y.size());
}

double explained_deviance(const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda) {
  check_aligned(y, lambda);
  require((lambda.array() > 0.0).all(), ErrorKind::precondition, "predictions must be positive");
  const double ybar = y.mean();
  double fitted = 0.0, null = 0.0, saturated = 0.0;
  for (Index k = 0; k < y.size(); ++k) {
    const double v = y.data()[k];
    fitted += poisson_kernel(v, lambda.data()[k]);
    null += poisson_kernel(v, ybar);
    saturated += v == 0.0 ? 0.0 : poisson_kernel(v, v);
  }
  const double null_dev = saturated - null;
  require(null_dev > 0.0, ErrorKind::precondition, "null deviance is zero; explained deviance is undefined");
  return 1.0 - (saturated - fitted) / null_dev;
}

double mse_params(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true) {
  require(theta_hat.size() == theta_true.size() && theta_hat.size() > 0, ErrorKind::precondition,
          "parameter vectors must have equal, positive length");
  return (theta_hat - theta_true).squaredNorm() / static_cast<double>(theta_hat.size());
}

}  // namespace pstarmax
