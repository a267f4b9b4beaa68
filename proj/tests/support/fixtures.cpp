#include "fixtures.hpp"

#include <random>

namespace pstarmax::testing {

SimulationResult Scenario::simulate(Index T, std::uint64_t seed, CopulaSpec copula) const {
  SimulationConfig cfg;
  cfg.T = T;
  cfg.seed = seed;
  cfg.copula = copula;
  return simulate_path(theta, spec, w, covariates(), cfg);
}

Scenario reference_linear(int n) {
  Scenario s;
  s.spec.a = {1};
  s.spec.b = {1};
  s.w = build_grid_4nn({n});
  s.theta.delta = Eigen::VectorXd::Constant(1, 5.0);
  s.theta.alpha = {{0.2, 0.1}};
  s.theta.beta = {{0.2, 0.1}};
  return s;
}

RandomCase random_case(Rng& rng, Link link, int q, bool covariates, InterceptKind intercept) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> order(0, 1);
  const int n = 3 + static_cast<int>(rng() % 2);
  const bool linear = link == Link::linear;

  RandomCase c;
  Scenario& s = c.scenario;
  s.spec.link = link;
  s.spec.intercept = intercept;
  s.w = build_grid_4nn({n});
  const Index p = s.w.p();
  for (int i = 0; i < q; ++i) s.spec.a.push_back(order(rng));
  const int r = 1 + static_cast<int>(rng() % 2);
  for (int j = 0; j < r; ++j) s.spec.b.push_back(order(rng));
  if (covariates) s.spec.s = {order(rng)};

  // Coefficients sharing a total mass of 0.5 keep the simulated path stationary.
  const int coefficients = [&] {
    int k = 0;
    for (int a : s.spec.a) k += a + 1;
    for (int b : s.spec.b) k += b + 1;
    return k;
  }();
  auto coefficient = [&] { return (0.2 + 0.8 * unit(rng)) * 0.5 / coefficients; };
  s.theta.delta = Eigen::VectorXd::Constant(s.spec.intercept_size(p), 0.0);
  for (Index i = 0; i < s.theta.delta.size(); ++i)
    s.theta.delta[i] = linear ? 1.0 + 2.0 * unit(rng) : 0.3 + 0.5 * unit(rng);
  for (int a : s.spec.a) {
    s.theta.alpha.emplace_back();
    for (int l = 0; l <= a; ++l) s.theta.alpha.back().push_back(coefficient());
  }
  for (int b : s.spec.b) {
    s.theta.beta.emplace_back();
    for (int l = 0; l <= b; ++l) s.theta.beta.back().push_back(coefficient());
  }
  const Index T = 120;
  if (covariates) {
    ArmaCovariateConfig cfg;
    cfg.center = !linear;
    cfg.shift_nonnegative = linear;
    s.x = generate_arma_covariate(p, T, rng(), cfg);
    s.theta.gamma = {std::vector<double>(static_cast<std::size_t>(s.spec.s[0]) + 1, 0.0)};
    for (double& g : s.theta.gamma[0]) g = linear ? 0.5 * unit(rng) : 0.4 * unit(rng) - 0.2;
  }
  c.y = s.simulate(T, rng()).counts;

  // Move away from the truth while staying inside the valid region of the link.
  Eigen::VectorXd theta = pack(s.theta);
  for (Index k = 0; k < theta.size(); ++k) theta[k] *= 0.8 + 0.4 * unit(rng);
  c.theta = theta;
  c.label = std::string(linear ? "linear" : "log_linear") + " q=" + std::to_string(q) +
            " r=" + std::to_string(r) + (covariates ? " cov" : "") +
            (intercept == InterceptKind::inhomogeneous ? " inhom" : " hom") + " p=" + std::to_string(p);
  return c;
}

}  // namespace pstarmax::testing
