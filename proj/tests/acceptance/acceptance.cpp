// Acceptance criteria. One PASS/FAIL line per criterion; exit status 1 if any fails.
#include "fixtures.hpp"
#include "oracles.hpp"

#include "pstarmax/estimate.hpp"
#include "pstarmax/study.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cstdlib>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace pstarmax {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

void info(const std::string& line) { fmt::print("  info: {}\n", line); }

Outcome gradient() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(7001);
  double worst = 0.0;
  int n = 0;
  while (n < 50)
    for (Link link : {Link::linear, Link::log_linear})
      for (int q = 0; q <= 2; ++q)
        for (bool cov : {false, true})
          for (InterceptKind ik : {InterceptKind::homogeneous, InterceptKind::inhomogeneous}) {
            if (n == 50) continue;
            const auto c = testing::random_case(rng, link, q, cov, ik);
            const QuasiLikelihood ql(c.scenario.spec, c.scenario.w, c.y, c.scenario.covariates());
            const auto analytic = ql.evaluate(c.theta, false).score;
            worst = std::max(worst, testing::max_relative_error(analytic, testing::finite_difference_score(ql, c.theta), 1.0));
            ++n;
          }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 60.0, fmt::format("{} configs, max relative error {:.3g}, {:.1f} s", n, worst, secs)};
}

Outcome copula_marginals() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(7002);
  const Index draws = 100000, p = 3;
  double min_p = 1.0;
  for (const CopulaSpec c : {CopulaSpec{}, CopulaSpec{CopulaFamily::clayton, 2.0}, CopulaSpec{CopulaFamily::frank, 5.0},
                             CopulaSpec{CopulaFamily::joe, 2.0}})
    for (double lambda : {0.5, 3.0, 20.0}) {
      std::vector<std::vector<double>> comp(p, std::vector<double>(static_cast<std::size_t>(draws)));
      const Eigen::VectorXd l = Eigen::VectorXd::Constant(p, lambda);
      Eigen::VectorXd y(p);
      for (Index d = 0; d < draws; ++d) {
        sample_counts(l, c, rng, y);
        for (Index i = 0; i < p; ++i) comp[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] = y[i];
      }
      for (const auto& v : comp) min_p = std::min(min_p, testing::poisson_gof(v, lambda).p_value);
    }
  std::vector<double> u1(draws), u2(draws);
  Eigen::VectorXd u(2);
  for (Index d = 0; d < draws; ++d) {
    sample_copula({CopulaFamily::clayton, 2.0}, rng, u);
    u1[static_cast<std::size_t>(d)] = u[0];
    u2[static_cast<std::size_t>(d)] = u[1];
  }
  const auto tau = testing::kendall_tau(u1, u2);
  const bool tau_ok = std::abs(tau.tau - 0.5) <= 3.0 * tau.std_error;
  const double secs = seconds_since(t0);
  return {min_p > 0.001 && tau_ok && secs < 120.0,
          fmt::format("min GOF p-value {:.4f} over 36 components, Clayton(2) tau {:.4f} (se {:.4f}), {:.1f} s", min_p,
                      tau.tau, tau.std_error, secs)};
}

Outcome moments() {
  const auto t0 = Clock::now();
  const auto sc = testing::reference_linear(9);
  const auto sim = sc.simulate(100000, 7003);
  const Eigen::MatrixXd& y = sim.counts.values();
  const double mean_err = ((y.rowwise().mean().array() - 12.5).abs() / 12.5).maxCoeff();
  // Bartlett: Var(c_h) ~ (1/n) sum_k [g(k)^2 + g(k + h) g(k - h)] per location, g(-k) = g(k).
  const int K = 80;
  std::vector<Eigen::VectorXd> g;
  for (int k = 0; k <= K + 2; ++k) g.push_back(autocovariance(sc.theta, sc.spec, sc.w, k).diagonal());
  const auto at = [&](int k) -> const Eigen::VectorXd& { return g[static_cast<std::size_t>(std::abs(k))]; };
  const double n = static_cast<double>(y.cols());
  double gamma_err = 0.0;
  for (int h = 0; h <= 2; ++h) {
    const Eigen::VectorXd& theory = at(h);
    const Eigen::VectorXd emp = testing::sample_autocovariance(y, h);
    Eigen::ArrayXd var = Eigen::ArrayXd::Zero(theory.size());
    for (int k = -K; k <= K; ++k) var += at(k).array().square() + at(k + h).array() * at(k - h).array();
    const Eigen::ArrayXd se = (var / n).sqrt();
    const Eigen::ArrayXd rel = (emp - theory).array().abs() / theory.array();
    const double e = rel.maxCoeff();
    info(fmt::format("Gamma({}) diagonal: theory mean {:.4f}, max relative deviation {:.4f}, within 5% at {}/{} "
                     "locations, 5% = {:.2f} Bartlett SE, max |z| {:.2f}, deviation of the diagonal mean {:.4f}",
                     h, theory.mean(), e, (rel < 0.05).count(), rel.size(), (0.05 * theory.array() / se).mean(),
                     ((emp - theory).array() / se).abs().maxCoeff(), std::abs(emp.mean() / theory.mean() - 1.0)));
    gamma_err = std::max(gamma_err, e);
  }
  const double secs = seconds_since(t0);
  return {mean_err < 0.01 && gamma_err < 0.05 && secs < 180.0,
          fmt::format("max per-location mean deviation {:.4f}, max Gamma deviation {:.4f}, {:.1f} s", mean_err,
                      gamma_err, secs)};
}

std::string nonconvergence_note(const FitSummary& s) {
  return fmt::format("{} nonconvergence {:.3f}", s.model, s.nonconvergence_rate);
}

Outcome size() {
  PresetOptions o;
  o.replicates = 1000;
  o.seed = 7004;
  const auto report = run_study(preset_plan(StudyKind::size, o));
  const auto& t = report.test_summary(250, "gamma[1][0]");
  const auto& f = report.fit_summary(250, "model");
  return {t.rate >= 0.029 && t.rate <= 0.071 && f.nonconvergence_rate < 0.02,
          fmt::format("rejection rate {:.3f} over {} tests, {}", t.rate, t.n, nonconvergence_note(f))};
}

Outcome boundary() {
  PresetOptions o;
  o.replicates = 1000;
  o.seed = 7005;
  o.T = {100};
  o.covariate = false;
  o.feedback = false;
  o.parameter = "beta[1][0]";
  const auto report = run_study(preset_plan(StudyKind::size, o));
  const auto& adj = report.test_summary(100, "beta[1][0]");
  const auto& plain = report.test_summary(100, "beta[1][0]:plain");
  const auto& f = report.fit_summary(100, "model");
  // 3 sigma binomial bands around 0.05 and 0.025 at n = 1000.
  const double band_half = 3.0 * std::sqrt(0.025 * 0.975 / 1000.0);
  const bool ok = adj.rate >= 0.029 && adj.rate <= 0.071 && std::abs(plain.rate - 0.025) <= band_half &&
                  f.nonconvergence_rate < 0.02;
  return {ok, fmt::format("adjusted {:.3f}, unadjusted {:.3f} (target 0.025 +/- {:.3f}), {}", adj.rate, plain.rate,
                          band_half, nonconvergence_note(f))};
}

Outcome anisotropy() {
  PresetOptions o;
  o.replicates = 200;
  o.seed = 7006;
  o.T = {500};
  const auto report = run_study(preset_plan(StudyKind::anisotropy, o));
  const auto& iso = report.fit_summary(500, "isotropic");
  const auto& aniso = report.fit_summary(500, "anisotropic");
  const auto& beta = report.test_summary(500, "isotropic:beta[1][1]");
  info(fmt::format("anisotropic beta contrast rejects {:.3f}", report.test_summary(500, "anisotropic:beta_contrast").rate));
  const bool ok = iso.qic_preferred <= 0.05 && beta.rate >= 0.95 && iso.nonconvergence_rate < 0.02 &&
                  aniso.nonconvergence_rate < 0.02;
  return {ok, fmt::format("isotropic preferred {:.3f}, isotropic beta[1][1] rejects {:.3f}, {}, {}", iso.qic_preferred,
                          beta.rate, nonconvergence_note(iso), nonconvergence_note(aniso))};
}

Outcome initialization() {
  PresetOptions o;
  o.link = Link::log_linear;
  o.lags = 2;
  o.replicates = 200;
  o.seed = 7007;
  const auto report = run_study(preset_plan(StudyKind::initialization, o));
  const auto& first = report.fit_summary(250, "first_obs");
  const auto& zero = report.fit_summary(250, "zero");
  const auto& truth = report.fit_summary(250, "true_value");
  info(fmt::format("global_mean median MSE {:.5f}", report.fit_summary(250, "global_mean").median_mse));
  bool converged = true;
  for (const auto& s : report.fit_summaries) converged = converged && s.nonconvergence_rate < 0.02;
  const bool ok = zero.median_mse > first.median_mse && first.median_mse <= 1.1 * truth.median_mse && converged;
  return {ok, fmt::format("median MSE zero {:.5f}, first_obs {:.5f}, true_value {:.5f}, nonconvergence below 2%: {}",
                          zero.median_mse, first.median_mse, truth.median_mse, converged)};
}

Outcome consistency() {
  PresetOptions o;
  o.replicates = 200;
  o.seed = 7008;
  o.T = {100, 250, 500};
  const auto report = run_study(preset_plan(StudyKind::copula, o));
  std::vector<double> med;
  bool converged = true;
  for (Index T : o.T) {
    const auto& s = report.fit_summary(T, "model");
    med.push_back(s.median_mse);
    converged = converged && s.nonconvergence_rate < 0.02;
  }
  const bool ok = med[0] > med[1] && med[1] > med[2] && converged;
  return {ok, fmt::format("median MSE {:.5f} > {:.5f} > {:.5f}, nonconvergence below 2%: {}", med[0], med[1], med[2],
                          converged)};
}

Outcome grid_search() {
  ModelSpec s;
  s.b = {0};
  const WeightMatrixSet w({WeightMatrix::identity(1)});
  ParameterVector truth;
  truth.delta = Eigen::VectorXd::Constant(1, 2.0);
  truth.beta = {{0.4}};
  const double d0 = 1.0, d1 = 3.0, b0 = 0.2, b1 = 0.6;
  const double hd = (d1 - d0) / 199.0, hb = (b1 - b0) / 199.0;
  int matched = 0;
  double worst_gap = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    SimulationConfig cfg;
    cfg.T = 1000;
    cfg.seed = derive_seed(7009, static_cast<std::uint64_t>(rep));
    const auto y = simulate_path(truth, s, w, nullptr, cfg).counts;
    const std::vector<double> series(y.values().data(), y.values().data() + y.values().size());
    const auto f = fit(s, w, y, nullptr);
    double best = -INFINITY, bd = 0.0, bb = 0.0;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        const double d = d0 + i * hd, b = b0 + j * hb;
        const double ll = testing::univariate_loglik(series, d, b);
        if (ll > best) {
          best = ll;
          bd = d;
          bb = b;
        }
      }
    worst_gap = std::max(worst_gap, best - f.loglik);
    matched += std::abs(f.theta[0] - bd) <= hd && std::abs(f.theta[1] - bb) <= hb && f.loglik >= best - 1e-9 ? 1 : 0;
  }
  return {matched == 10, fmt::format("{}/10 datasets within one grid step, max grid-over-fit loglik gap {:.3g}", matched,
                                     worst_gap)};
}

}  // namespace
}  // namespace pstarmax

int main(int argc, char** argv) {
  using namespace pstarmax;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient vs finite differences", gradient},
      {"2 copula DGP marginals and Kendall tau", copula_marginals},
      {"3 stationary moments", moments},
      {"4 empirical size", size},
      {"5 boundary test calibration", boundary},
      {"6 anisotropy selection", anisotropy},
      {"7 initialization study", initialization},
      {"8 consistency trend", consistency},
      {"9 grid-search equivalence", grid_search},
  };
  // Optional arguments select criteria by number.
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k >= 1 && k <= static_cast<int>(criteria.size())) selected[static_cast<std::size_t>(k - 1)] = true;
  }
  int failures = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    if (!selected[c]) continue;
    const auto& [name, run] = criteria[c];
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    fmt::print("{} criterion {}: {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", name, o.detail, seconds_since(t0));
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
