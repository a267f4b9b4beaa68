#include "pstarmax/estimate.hpp"

#include "optimizer.hpp"
#include "pstarmax/error.hpp"
#include "pstarmax/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pstarmax {

namespace {

constexpr double kActiveTolerance = 1e-8;

Index coefficient_count(const ModelSpec& spec) {
  Index n = 0;
  for (int a : spec.a) n += a + 1;
  for (int b : spec.b) n += b + 1;
  return n;
}

detail::Constraints to_constraints(const FeasibleSet& fs) {
  detail::Constraints c;
  c.lower = fs.lower;
  c.upper = fs.upper;
  c.sum_set = fs.summed;
  c.sum_bound = fs.sum_bound;
  return c;
}

Eigen::VectorXd perturbed_start(const ModelSpec& spec, Index p, const CountPanel& y, const FeasibleSet& fs,
                                std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const Index n_delta = spec.intercept_size(p);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.parameter_count(p));
  double total = 0.0;
  Eigen::VectorXd raw(static_cast<Index>(fs.summed.size()));
  for (Index k = 0; k < raw.size(); ++k) {
    raw[k] = uniform_open(rng);
    total += raw[k];
  }
  const double target = (0.1 + 0.8 * uniform_open(rng)) * std::max(fs.sum_bound, 0.0);
  for (Index k = 0; k < raw.size(); ++k) theta[fs.summed[static_cast<std::size_t>(k)]] = raw[k] / total * target;
  for (Index i = 0; i < n_delta; ++i) {
    const double ybar = n_delta == 1 ? y.values().mean() : y.values().row(i).mean();
    theta[i] = spec.link == Link::linear ? ybar * (1.0 - target) : std::log1p(ybar) * (1.0 - target);
  }
  return theta;
}

}  // namespace

void FitConfig::check() const {
  require(slack > 0.0 && slack < 1.0, ErrorKind::validation, "constraint slack must be in (0, 1)");
  require(gradient_tolerance > 0.0, ErrorKind::validation, "gradient tolerance must be positive");
  require(max_iterations > 0, ErrorKind::validation, "max_iterations must be positive");
  require(multistart >= 1, ErrorKind::validation, "multistart count must be at least 1");
  require(log_linear_box > 0.0, ErrorKind::validation, "log-linear box must be positive");
}

FeasibleSet feasible_set(const ModelSpec& spec, const WeightMatrixSet& w, const FitConfig& cfg) {
  const Index p = w.p();
  const Index k = spec.parameter_count(p);
  FeasibleSet fs;
  if (spec.link == Link::linear) {
    fs.lower = Eigen::VectorXd::Zero(k);
    fs.upper = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
  } else {
    fs.lower = Eigen::VectorXd::Constant(k, -cfg.log_linear_box);
    fs.upper = Eigen::VectorXd::Constant(k, cfg.log_linear_box);
  }
  fs.summed = ParameterLayout(spec, p).dynamic_indices();
  const double bound = cfg.criterion == StationarityCriterion::coefficient_sum
                           ? 1.0
                           : 1.0 / std::sqrt(column_sum_norm_tau(w));
  fs.sum_bound = bound - cfg.slack;
  require(fs.sum_bound > 0.0, ErrorKind::validation, "stationarity bound leaves no feasible coefficients");
  return fs;
}

ParameterVector default_start(const ModelSpec& spec, const WeightMatrixSet& w, const CountPanel& y) {
  const Index p = w.p();
  require(y.p() == p, ErrorKind::precondition, "count panel does not match the weights");
  ParameterVector theta;
  const Index ncoef = coefficient_count(spec);
  const double coef = ncoef > 0 ? 0.5 / static_cast<double>(ncoef) : 0.0;
  const double sum = ncoef > 0 ? 0.5 : 0.0;
  auto level = [&](double ybar) {
    return spec.link == Link::linear ? ybar * (1.0 - sum) : std::log1p(ybar) * (1.0 - sum);
  };
  if (spec.intercept == InterceptKind::homogeneous) {
    theta.delta = Eigen::VectorXd::Constant(1, level(y.values().mean()));
  } else {
    theta.delta.resize(p);
    for (Index i = 0; i < p; ++i) theta.delta[i] = level(y.values().row(i).mean());
  }
  for (int a : spec.a) theta.alpha.emplace_back(static_cast<std::size_t>(a + 1), coef);
  for (int b : spec.b) theta.beta.emplace_back(static_cast<std::size_t>(b + 1), coef);
  for (int s : spec.s) theta.gamma.emplace_back(static_cast<std::size_t>(s + 1), 0.0);
  return theta;
}

FitResult fit(const ModelSpec& spec, const WeightMatrixSet& w, const CountPanel& y, const CovariatePanel* x,
              const FitConfig& cfg) {
  cfg.check();
  spec.check(w);
  const Index p = w.p();
  require(y.p() == p, ErrorKind::precondition, "count panel does not match the weights");
  require(y.T() >= spec.first_time(), ErrorKind::precondition,
          "insufficient observations: T = " + std::to_string(y.T()) + " but the model needs T >= " +
              std::to_string(spec.first_time()));

  const auto report = check_identifiability(spec, w, x, cfg.check_design_rank ? &y : nullptr);
  if (!report.ok()) {
    std::ostringstream msg;
    msg << "model is not identifiable:";
    for (const auto& issue : report.issues())
      if (issue.error) msg << ' ' << issue.code << " (" << issue.message << ");";
    fail(ErrorKind::validation, msg.str());
  }

  FilterOptions fopts;
  fopts.init = cfg.init;
  fopts.supplied = cfg.supplied_init;
  const QuasiLikelihood ql(spec, w, y, x, fopts);
  const FeasibleSet fs = feasible_set(spec, w, cfg);
  const detail::Constraints constraints = to_constraints(fs);
  const double cells = static_cast<double>(p * ql.n_obs());

  detail::Objective obj;
  obj.value = [&](const Eigen::VectorXd& th) {
    const double ll = ql.value(th);
    return std::isfinite(ll) ? -ll / cells : std::numeric_limits<double>::infinity();
  };
  obj.model = [&](const Eigen::VectorXd& th, detail::LocalModel& m) {
    const auto ev = ql.evaluate(th, true);
    if (!std::isfinite(ev.loglik)) return false;
    m.f = -ev.loglik / cells;
    m.g = -ev.score / cells;
    m.B = ev.H / static_cast<double>(p);
    return true;
  };
  detail::OptimizerOptions oopts;
  oopts.gradient_tolerance = cfg.gradient_tolerance;
  oopts.max_iterations = cfg.max_iterations;

  std::vector<Eigen::VectorXd> starts;
  if (cfg.start) {
    require(cfg.start->size() == ql.parameter_count(), ErrorKind::precondition, "start has the wrong length");
    starts.push_back(*cfg.start);
  } else {
    starts.push_back(pack(default_start(spec, w, y)));
  }
  for (int s = 1; s < cfg.multistart; ++s)
    starts.push_back(perturbed_start(spec, p, y, fs, derive_seed(cfg.multistart_seed, static_cast<std::uint64_t>(s))));

  detail::OptimizerResult best;
  bool have = false;
  for (const auto& start : starts) {
    auto res = detail::minimize(obj, constraints, start, oopts);
    if (!std::isfinite(res.f)) continue;
    const bool better = !have || (res.converged && !best.converged) ||
                        (res.converged == best.converged && res.f < best.f);
    if (better) {
      best = std::move(res);
      have = true;
    }
  }
  require(have, ErrorKind::numerical, "optimizer failed to evaluate the likelihood at any start");

  FitResult out;
  out.spec = spec;
  out.p = p;
  out.n_obs = ql.n_obs();
  out.init = cfg.init;
  out.criterion = cfg.criterion;
  out.theta = best.x;
  out.theta_hat = unpack(best.x, spec, p);
  out.converged = best.converged;
  out.iterations = best.iterations;
  out.gradient_norm = best.projected_gradient;
  out.message = best.converged ? "converged" : best.message;
  out.fingerprint = y.fingerprint();

  const auto ev = ql.evaluate(best.x, true);
  require(std::isfinite(ev.loglik), ErrorKind::numerical, "likelihood is not finite at the estimate");
  out.loglik = ev.loglik;
  out.H = ev.H;
  out.G = ev.G;
  out.covariance = sandwich(ev.H, ev.G) / static_cast<double>(out.n_obs);
  out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd ginv = ev.H.ldlt().solve(ev.G);
  out.qic = -2.0 * ev.loglik + 2.0 * ginv.trace();

  for (Index k = 0; k < best.x.size(); ++k)
    if (std::abs(best.x[k] - fs.lower[k]) <= kActiveTolerance || std::abs(fs.upper[k] - best.x[k]) <= kActiveTolerance)
      out.active_constraints.push_back(k);
  out.sum_constraint_active = constraints.sum_abs(best.x) >= fs.sum_bound - kActiveTolerance;
  return out;
}

}  // namespace pstarmax
