#include "fixtures.hpp"
#include "oracles.hpp"

#include "pstarmax/error.hpp"
#include "pstarmax/model.hpp"
#include "pstarmax/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

namespace pstarmax {
namespace {

using testing::reference_linear;

ModelSpec first_order() {
  ModelSpec s;
  s.a = {1};
  s.b = {1};
  return s;
}

TEST(CoefficientMatrices, CombineWeightsPerLag) {
  const auto sc = reference_linear(3);
  const auto m = coefficient_matrices(sc.theta, sc.spec, sc.w);
  ASSERT_EQ(m.A.size(), 1u);
  ASSERT_EQ(m.B.size(), 1u);
  const Eigen::MatrixXd expected = 0.2 * Eigen::MatrixXd::Identity(9, 9) + 0.1 * sc.w[1].dense();
  EXPECT_LT((m.A[0] - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((m.B[0] - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CoefficientMatrices, ZeroCoefficients) {
  auto sc = reference_linear(3);
  sc.theta.alpha = {{0.0, 0.0}};
  sc.theta.beta = {{0.0, 0.0}};
  const auto m = coefficient_matrices(sc.theta, sc.spec, sc.w);
  EXPECT_EQ(m.A[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.B[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(CoefficientMatrices, UnivariateReduction) {
  ModelSpec s;
  s.a = {0};
  s.b = {0};
  const WeightMatrixSet w({WeightMatrix::identity(1)});
  ParameterVector t;
  t.delta = Eigen::VectorXd::Constant(1, 1.0);
  t.alpha = {{0.3}};
  t.beta = {{0.4}};
  const auto m = coefficient_matrices(t, s, w);
  EXPECT_DOUBLE_EQ(m.A[0](0, 0), 0.3);
  EXPECT_DOUBLE_EQ(m.B[0](0, 0), 0.4);
}

TEST(CoefficientMatrices, DimensionMismatch) {
  const auto sc = reference_linear(3);
  auto bad = sc.theta;
  bad.alpha = {{0.2}};
  EXPECT_THROW(coefficient_matrices(bad, sc.spec, sc.w), Error);
}

TEST(Stationarity, ReferenceMargin) {
  const auto sc = reference_linear(9);
  EXPECT_NEAR(stationarity_margin(sc.theta, sc.spec, sc.w, StationarityCriterion::coefficient_sum), 0.4, 1e-15);
}

TEST(Stationarity, ZeroCoefficientsGiveMarginOne) {
  auto sc = reference_linear(3);
  sc.theta.alpha = {{0.0, 0.0}};
  sc.theta.beta = {{0.0, 0.0}};
  EXPECT_DOUBLE_EQ(stationarity_margin(sc.theta, sc.spec, sc.w, StationarityCriterion::coefficient_sum), 1.0);
}

TEST(Stationarity, CriteriaAgreeForSymmetricWeights) {
  auto sc = reference_linear(3);
  AdjacencyList k4{{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};
  sc.w = from_adjacency(k4, 1);
  EXPECT_NEAR(stationarity_margin(sc.theta, sc.spec, sc.w, StationarityCriterion::coefficient_sum),
              stationarity_margin(sc.theta, sc.spec, sc.w, StationarityCriterion::tau_adjusted), 1e-15);
}

TEST(Stationarity, TauAdjustedIsNeverLarger) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  for (int n = 2; n <= 6; ++n) {
    for (const auto& w : {build_grid_4nn({n}), build_grid_directional({n})}) {
      ASSERT_GE(column_sum_norm_tau(w), 1.0);
      ModelSpec s;
      s.a = {w.max_order()};
      s.b = {w.max_order()};
      ParameterVector t;
      t.delta = Eigen::VectorXd::Constant(1, 1.0);
      t.alpha = {std::vector<double>(w.size())};
      t.beta = {std::vector<double>(w.size())};
      for (auto& v : t.alpha[0]) v = u(rng);
      for (auto& v : t.beta[0]) v = u(rng);
      EXPECT_LE(stationarity_margin(t, s, w, StationarityCriterion::tau_adjusted),
                stationarity_margin(t, s, w, StationarityCriterion::coefficient_sum));
    }
  }
}

TEST(Identifiability, SpatiallyConstantCovariateIsFlagged) {
  auto spec = first_order();
  spec.s = {1};
  const auto w = build_grid_4nn({3});
  Eigen::MatrixXd x(9, 105);
  for (Index t = 0; t < x.cols(); ++t) x.col(t).setConstant(std::sin(2.0 * M_PI * static_cast<double>(t) / 52.0));
  const CovariatePanel panel({x});
  const auto report = check_identifiability(spec, w, &panel);
  EXPECT_TRUE(report.has("spatially_constant_covariate"));
}

TEST(Identifiability, TimeConstantCovariateWithInhomogeneousIntercept) {
  auto spec = first_order();
  spec.s = {0};
  spec.intercept = InterceptKind::inhomogeneous;
  const auto w = build_grid_4nn({3});
  Eigen::MatrixXd x(9, 50);
  for (Index i = 0; i < 9; ++i) x.row(i).setConstant(static_cast<double>(i));
  const CovariatePanel panel({x});
  EXPECT_TRUE(check_identifiability(spec, w, &panel).has("time_constant_covariate"));
}

TEST(Identifiability, PureFeedbackIsFlagged) {
  ModelSpec spec;
  spec.a = {1};
  EXPECT_TRUE(check_identifiability(spec, build_grid_4nn({3})).has("no_observation_lags"));
}

TEST(Identifiability, ReferenceSetupHasNoFlags) {
  auto sc = reference_linear(9);
  sc.spec.s = {1};
  sc.theta.gamma = {{2.0, 0.0}};
  sc.x = generate_arma_covariate(81, 250, 4);
  const auto y = sc.simulate(250, 9).counts;
  const auto report = check_identifiability(sc.spec, sc.w, sc.covariates(), &y);
  EXPECT_TRUE(report.issues().empty());
}

TEST(StationaryMean, ReferenceClosedForm) {
  const auto sc = reference_linear(9);
  const auto mu = stationary_mean(sc.theta, sc.spec, sc.w);
  EXPECT_LT((mu.array() - 12.5).abs().maxCoeff(), 1e-12);
}

TEST(StationaryMean, ZeroCoefficientsGiveDelta) {
  auto sc = reference_linear(3);
  sc.spec.intercept = InterceptKind::inhomogeneous;
  sc.theta.delta = Eigen::VectorXd::LinSpaced(9, 1.0, 9.0);
  sc.theta.alpha = {{0.0, 0.0}};
  sc.theta.beta = {{0.0, 0.0}};
  EXPECT_LT((stationary_mean(sc.theta, sc.spec, sc.w) - sc.theta.delta).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(StationaryMean, UnivariateGeometricSeries) {
  ModelSpec s;
  s.b = {0};
  ParameterVector t;
  t.delta = Eigen::VectorXd::Constant(1, 1.0);
  t.beta = {{0.5}};
  EXPECT_NEAR(stationary_mean(t, s, WeightMatrixSet({WeightMatrix::identity(1)}))[0], 2.0, 1e-15);
}

TEST(StationaryMean, SolvesTheFixedPoint) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto w = build_grid_directional({3 + static_cast<int>(rng() % 3)});
    ModelSpec s;
    s.intercept = InterceptKind::inhomogeneous;
    s.a = {2};
    s.b = {2, 1};
    ParameterVector t;
    t.delta = Eigen::VectorXd::NullaryExpr(w.p(), [&] { return 0.5 + u(rng); });
    t.alpha = {{0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng)}};
    t.beta = {{0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng)}, {0.1 * u(rng), 0.1 * u(rng)}};
    const Eigen::VectorXd gbar = Eigen::VectorXd::NullaryExpr(w.p(), [&] { return u(rng); });
    const auto mu = stationary_mean(t, s, w, gbar);
    const auto m = coefficient_matrices(t, s, w);
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(w.p(), w.p());
    for (const auto& a : m.A) total += a;
    for (const auto& b : m.B) total += b;
    EXPECT_LT((mu - (t.delta + total * mu + gbar)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(StationaryMean, PermutationEquivariance) {
  auto sc = reference_linear(4);
  sc.spec.intercept = InterceptKind::inhomogeneous;
  sc.theta.delta = Eigen::VectorXd::LinSpaced(16, 1.0, 4.0);
  std::vector<Index> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  auto permuted = sc.theta;
  for (Index i = 0; i < 16; ++i) permuted.delta[i] = sc.theta.delta[perm[static_cast<std::size_t>(i)]];
  const auto mu = stationary_mean(sc.theta, sc.spec, sc.w);
  const auto mu_p = stationary_mean(permuted, sc.spec, sc.w.permuted(perm));
  for (Index i = 0; i < 16; ++i) EXPECT_NEAR(mu_p[i], mu[perm[static_cast<std::size_t>(i)]], 1e-12);
}

TEST(StationaryMean, LogLinearIsUnsupported) {
  auto sc = reference_linear(3);
  sc.spec.link = Link::log_linear;
  EXPECT_THROW(stationary_mean(sc.theta, sc.spec, sc.w), Error);
}

TEST(StationaryMean, MatchesLongSimulation) {
  // 3x3 grid, 1e5 steps: every location mean within 3 batch-means standard errors of 12.5.
  const auto sc = reference_linear(3);
  const auto sim = sc.simulate(100000, 21);
  const Eigen::MatrixXd& y = sim.counts.values();
  const Index batches = 50, len = y.cols() / batches;
  for (Index i = 0; i < 9; ++i) {
    Eigen::VectorXd means(batches);
    for (Index b = 0; b < batches; ++b) means[b] = y.row(i).segment(b * len, len).mean();
    const double m = means.mean();
    const double se = std::sqrt((means.array() - m).square().sum() / (batches - 1) / batches);
    EXPECT_LT(std::abs(y.row(i).mean() - 12.5), 3.0 * se) << "location " << i;
  }
}

TEST(Autocovariance, NoDynamicsGivesSigma) {
  auto sc = reference_linear(3);
  sc.theta.alpha = {{0.0, 0.0}};
  sc.theta.beta = {{0.0, 0.0}};
  const Eigen::MatrixXd sigma = Eigen::VectorXd::LinSpaced(9, 1.0, 2.0).asDiagonal();
  EXPECT_LT((autocovariance(sc.theta, sc.spec, sc.w, 0, sigma) - sigma).cwiseAbs().maxCoeff(), 1e-14);
  for (int h = 1; h <= 3; ++h) EXPECT_LT(autocovariance(sc.theta, sc.spec, sc.w, h, sigma).cwiseAbs().maxCoeff(), 1e-14);
}

ParameterVector univariate_beta(double beta) {
  ParameterVector t;
  t.delta = Eigen::VectorXd::Constant(1, 1.0);
  t.alpha = {{0.0}};
  t.beta = {{beta}};
  return t;
}

TEST(Autocovariance, UnivariateScalarFormula) {
  ModelSpec s;
  s.a = {0};
  s.b = {0};
  const WeightMatrixSet w({WeightMatrix::identity(1)});
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(1, 1, 2.0);
  EXPECT_NEAR(autocovariance(univariate_beta(0.5), s, w, 0, sigma)(0, 0), 8.0 / 3.0, 1e-14);
  EXPECT_NEAR(autocovariance(univariate_beta(0.5), s, w, 1, sigma)(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(Autocovariance, UnivariateMatchesLongSimulation) {
  // delta = 1, beta = 0.5 gives mean 2, so Sigma = diag(mu) = 2 and the 8/3, 4/3 values apply.
  ModelSpec s;
  s.a = {0};
  s.b = {0};
  const WeightMatrixSet w({WeightMatrix::identity(1)});
  SimulationConfig cfg;
  cfg.T = 1000000;
  cfg.seed = 99;
  const auto y = simulate_path(univariate_beta(0.5), s, w, nullptr, cfg).counts.values();
  const Index batches = 100, len = y.cols() / batches;
  for (int h = 0; h <= 1; ++h) {
    const double expected = h == 0 ? 8.0 / 3.0 : 4.0 / 3.0;
    Eigen::VectorXd est(batches);
    for (Index b = 0; b < batches; ++b) est[b] = testing::sample_autocovariance(y.middleCols(b * len, len), h)[0];
    const double m = est.mean();
    const double se = std::sqrt((est.array() - m).square().sum() / (batches - 1) / batches);
    EXPECT_LT(std::abs(testing::sample_autocovariance(y, h)[0] - expected), 3.0 * se) << "lag " << h;
  }
}

TEST(Autocovariance, GammaZeroMatchesSteinIteration) {
  const auto sc = reference_linear(4);
  const auto m = coefficient_matrices(sc.theta, sc.spec, sc.w);
  const Eigen::MatrixXd sigma = stationary_mean(sc.theta, sc.spec, sc.w).asDiagonal();
  const Eigen::MatrixXd oracle = testing::stein_gamma0(m.A[0], m.B[0], sigma);
  EXPECT_LT((autocovariance(sc.theta, sc.spec, sc.w, 0) - oracle).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd g1 = (m.A[0] + m.B[0]) * oracle - m.A[0] * sigma;
  EXPECT_LT((autocovariance(sc.theta, sc.spec, sc.w, 1) - g1).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Autocovariance, RecursionForHigherLags) {
  const auto sc = reference_linear(3);
  const auto m = coefficient_matrices(sc.theta, sc.spec, sc.w);
  const Eigen::MatrixXd M = m.A[0] + m.B[0];
  Eigen::MatrixXd prev = autocovariance(sc.theta, sc.spec, sc.w, 1);
  for (int h = 2; h <= 5; ++h) {
    const Eigen::MatrixXd cur = autocovariance(sc.theta, sc.spec, sc.w, h);
    EXPECT_LT((cur - M * prev).cwiseAbs().maxCoeff(), 1e-12) << "lag " << h;
    prev = cur;
  }
}

TEST(Autocovariance, HigherOrdersAreUnsupported) {
  auto sc = reference_linear(3);
  sc.spec.b = {1, 0};
  sc.theta.beta.push_back({0.05});
  try {
    (void)autocovariance(sc.theta, sc.spec, sc.w, 0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
}

TEST(Packing, HomogeneousFirstOrderLength) {
  EXPECT_EQ(first_order().parameter_count(81), 5);
  EXPECT_EQ(pack(reference_linear(9).theta).size(), 5);
}

TEST(Packing, InhomogeneousLength) {
  auto s = first_order();
  s.intercept = InterceptKind::inhomogeneous;
  EXPECT_EQ(s.parameter_count(4), 8);
}

TEST(Packing, NamesFollowThePackingOrder) {
  auto s = first_order();
  s.s = {1};
  const auto names = ParameterLayout(s, 9).names();
  const std::vector<std::string> expected{"delta0", "alpha[1][0]", "alpha[1][1]", "beta[1][0]",
                                          "beta[1][1]", "gamma[1][0]", "gamma[1][1]"};
  EXPECT_EQ(names, expected);
}

TEST(Packing, RoundTripOnRandomSpecs) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 1000; ++rep) {
    ModelSpec s;
    s.link = rng() % 2 ? Link::linear : Link::log_linear;
    s.intercept = rng() % 2 ? InterceptKind::homogeneous : InterceptKind::inhomogeneous;
    const int q = static_cast<int>(rng() % 3), r = 1 + static_cast<int>(rng() % 3), m = static_cast<int>(rng() % 3);
    for (int i = 0; i < q; ++i) s.a.push_back(static_cast<int>(rng() % 3));
    for (int j = 0; j < r; ++j) s.b.push_back(static_cast<int>(rng() % 3));
    for (int k = 0; k < m; ++k) s.s.push_back(static_cast<int>(rng() % 3));
    const Index p = 1 + static_cast<Index>(rng() % 6);
    const Eigen::VectorXd flat = Eigen::VectorXd::NullaryExpr(s.parameter_count(p), [&] { return z(rng); });
    const auto theta = unpack(flat, s, p);
    check_shape(theta, s, p);
    EXPECT_EQ(pack(theta), flat);
    EXPECT_EQ(unpack(pack(theta), s, p), theta);
  }
}

TEST(Packing, LengthMismatch) {
  EXPECT_THROW(unpack(Eigen::VectorXd::Zero(4), first_order(), 9), Error);
}

TEST(ModelSpec, ObservationLagsRequiredWithoutCovariates) {
  ModelSpec s;
  s.a = {1};
  EXPECT_THROW(s.check(build_grid_4nn({3})), Error);
  s.s = {0};
  EXPECT_NO_THROW(s.check(build_grid_4nn({3})));
}

TEST(ModelSpec, OrdersBoundedByWeights) {
  ModelSpec s;
  s.b = {2};
  EXPECT_THROW(s.check(build_grid_4nn({3})), Error);
  EXPECT_NO_THROW(s.check(build_grid_directional({3})));
}

}  // namespace
}  // namespace pstarmax
