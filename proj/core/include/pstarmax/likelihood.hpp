#pragma once

#include "pstarmax/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string_view>
#include <vector>

namespace pstarmax {

/// Lower bound applied to lambda inside log(lambda) and 1/lambda.
inline constexpr double kIntensityFloor = 1e-10;

enum class InitStrategy { first_obs, global_mean, zero, supplied };
std::string_view to_string(InitStrategy s) noexcept;
InitStrategy parse_init(std::string_view s);

struct FilterOptions {
  InitStrategy init = InitStrategy::first_obs;
  /// Predictor values (lambda, or nu for log-linear) for t = 0..first_time()-1, p x first_time().
  std::optional<Eigen::MatrixXd> supplied;
};

/// Predictor values for t = 0..t0-1 under the chosen strategy, p x first_time(). The global mean
/// is the per-location average over t = 1..T (all times when T = 0).
Eigen::MatrixXd initial_predictor(const ModelSpec& spec, const CountPanel& y, const FilterOptions& options);

/// Filtered intensities. Columns t < t0 hold the initial values and do not enter the likelihood.
struct FilterState {
  Link link = Link::linear;
  InitStrategy init = InitStrategy::first_obs;
  Index t0 = 1;
  Eigen::MatrixXd predictor;  ///< lambda_t (linear) or nu_t (log-linear), p x (T+1)
  Eigen::MatrixXd intensity;  ///< lambda_t, p x (T+1)
};

struct InfoMatrices {
  Eigen::MatrixXd H;
  Eigen::MatrixXd G;
  Eigen::MatrixXd sandwich;  ///< H^{-1} G H^{-1}
};

/// Quasi-likelihood of one dataset under one model. The regressor columns that do not
/// depend on the parameters (lagged observations, covariates) are built once here.
class QuasiLikelihood {
 public:
  QuasiLikelihood(ModelSpec spec, const WeightMatrixSet& w, const CountPanel& y, const CovariatePanel* x,
                  FilterOptions options = {});

  struct Evaluation {
    double loglik = 0.0;
    Eigen::VectorXd score;  ///< sum over t of the per-time scores
    Eigen::MatrixXd H;      ///< averaged over n_obs() time points; empty unless requested
    Eigen::MatrixXd G;
  };

  [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] Index p() const noexcept { return p_; }
  [[nodiscard]] Index T() const noexcept { return T_; }
  [[nodiscard]] Index t0() const noexcept { return t0_; }
  /// Number of time points in the likelihood, T - t0 + 1.
  [[nodiscard]] Index n_obs() const noexcept { return T_ - t0_ + 1; }
  [[nodiscard]] Index parameter_count() const noexcept { return k_; }
  [[nodiscard]] const CountPanel& counts() const noexcept { return y_; }

  /// Log-likelihood only; -infinity when the intensities leave the valid range.
  [[nodiscard]] double value(const Eigen::VectorXd& theta) const;
  /// Log-likelihood and score, plus H and G when `with_info`. `materialize` keeps every
  /// derivative panel instead of the q most recent ones (same arithmetic, more memory).
  [[nodiscard]] Evaluation evaluate(const Eigen::VectorXd& theta, bool with_info, bool materialize = false) const;
  [[nodiscard]] FilterState filter(const Eigen::VectorXd& theta) const;

 private:
  void fill(Index t, const Eigen::MatrixXd& eta, Eigen::MatrixXd& r) const;
  void initial_columns(Eigen::MatrixXd& eta) const;

  ModelSpec spec_;
  WeightMatrixSet w_;
  CountPanel y_;
  FilterOptions options_;
  Index p_, T_, t0_, k_, n_delta_, n_feedback_, n_fixed_;
  Eigen::MatrixXd fixed_;  ///< p x (n_fixed * (T+1)); block t holds [W(l) z_{t-j} | W(l) X_{k,t}]
  Eigen::MatrixXd init_;   ///< p x t0 initial predictor values
};

FilterState filter_intensity(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                             const CountPanel& y, const CovariatePanel* x, const FilterOptions& options = {});
double quasi_log_lik(const FilterState& state, const CountPanel& y);
Eigen::VectorXd score(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                      const CountPanel& y, const CovariatePanel* x, const FilterOptions& options = {});
InfoMatrices info_matrices(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                           const CountPanel& y, const CovariatePanel* x, const FilterOptions& options = {});

/// H^{-1} G H^{-1}; throws a numerical error quoting the condition number when H is singular.
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& h, const Eigen::MatrixXd& g);

}  // namespace pstarmax
