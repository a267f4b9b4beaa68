#pragma once

#include "pstarmax/model.hpp"
#include "pstarmax/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace pstarmax {

enum class CopulaFamily { independent, clayton, frank, joe };

std::string_view to_string(CopulaFamily family) noexcept;
CopulaFamily parse_copula_family(std::string_view s);

struct CopulaSpec {
  CopulaFamily family = CopulaFamily::independent;
  double parameter = 0.0;

  /// Throws unless clayton > 0, frank != 0 (negative only for p = 2), joe >= 1.
  void check(Index p) const;
  friend bool operator==(const CopulaSpec&, const CopulaSpec&) = default;
};

/// One draw from the copula, written into `u` (length p), entries in (0, 1).
void sample_copula(const CopulaSpec& spec, Rng& rng, Eigen::Ref<Eigen::VectorXd> u);
Eigen::VectorXd sample_copula(const CopulaSpec& spec, Index p, Rng& rng);

/// Same draw expressed as -log(U), computed without the round trip through U.
void sample_copula_exponential(const CopulaSpec& spec, Rng& rng, Eigen::Ref<Eigen::VectorXd> e);

/// Poisson(lambda_i) counts coupled through the copula on unit-rate interarrival times. The
/// independence copula draws each count directly.
void sample_counts(const Eigen::VectorXd& lambda, const CopulaSpec& copula, Rng& rng,
                   Eigen::Ref<Eigen::VectorXd> counts);
Eigen::VectorXd sample_counts(const Eigen::VectorXd& lambda, const CopulaSpec& copula, Rng& rng);

struct SimulationConfig {
  Index T = 100;
  int burn_in = 100;
  std::uint64_t seed = 0;
  /// Predictor values (lambda, or nu for the log-linear link) for the lags before burn-in.
  /// One vector is reused for every lag; empty selects the default start.
  std::optional<Eigen::VectorXd> initial_state;
  CopulaSpec copula;
};

struct SimulationResult {
  CountPanel counts;          ///< Y_t, t = 0..T
  Eigen::MatrixXd intensity;  ///< lambda_t, p x (T+1)
  Eigen::MatrixXd predictor;  ///< lambda_t (linear) or nu_t (log-linear)
};

/// Iterates the intensity recursion for burn_in + T + 1 steps and keeps the last T + 1.
/// Burn-in steps ignore covariates. `x`, if given, must cover t = 0..T.
SimulationResult simulate_path(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                               const CovariatePanel* x, const SimulationConfig& cfg);

struct ArmaCovariateConfig {
  double ar = 0.5;
  double ma = 0.3;
  int warmup = 200;
  bool center = false;  ///< subtract the stationary mean 0.5 (1 + ma) / (1 - ar)
  bool shift_nonnegative = true;  ///< then shift so that the minimum is 0 if it is negative
};

/// Independent ARMA(1,1) paths with U[0,1] innovations at each of p locations, t = 0..T.
CovariatePanel generate_arma_covariate(Index p, Index T, std::uint64_t seed, const ArmaCovariateConfig& cfg = {});

}  // namespace pstarmax
