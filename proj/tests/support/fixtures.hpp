#pragma once

#include "pstarmax/estimate.hpp"
#include "pstarmax/model.hpp"
#include "pstarmax/rng.hpp"
#include "pstarmax/simulate.hpp"
#include "pstarmax/spatial_weights.hpp"

#include <optional>
#include <string>

namespace pstarmax::testing {

/// Linear (1_1, 1_1) model with delta0 = 5, alpha1 = beta1 = (0.2, 0.1) on an n x n 4NN grid.
struct Scenario {
  ModelSpec spec;
  WeightMatrixSet w;
  ParameterVector theta;
  std::optional<CovariatePanel> x;

  [[nodiscard]] const CovariatePanel* covariates() const { return x ? &*x : nullptr; }
  [[nodiscard]] SimulationResult simulate(Index T, std::uint64_t seed, CopulaSpec copula = {}) const;
};
Scenario reference_linear(int n = 9);

/// A random model with data: link, feedback order q in {0, 1, 2}, covariates and intercept
/// structure are drawn from `rng`; the panel is simulated from a stationary parameter.
struct RandomCase {
  Scenario scenario;
  CountPanel y;
  Eigen::VectorXd theta;  ///< evaluation point, away from the true value
  std::string label;
};
RandomCase random_case(Rng& rng, Link link, int q, bool covariates, InterceptKind intercept);

}  // namespace pstarmax::testing
