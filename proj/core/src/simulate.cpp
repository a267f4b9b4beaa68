#include "pstarmax/simulate.hpp"

#include "pstarmax/error.hpp"
#include "recursion.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace pstarmax {

namespace {

constexpr double kMaxIntensity = 1e12;

double exp1(Rng& rng) { return -std::log(uniform_open(rng)); }

// Logarithmic-series variate with parameter a = 1 - exp(-theta) (Kemp's LK algorithm).
double sample_log_series(double theta, Rng& rng) {
  const double a = -std::expm1(-theta);
  const double u2 = uniform_open(rng);
  if (u2 > a) return 1.0;
  const double q = -std::expm1(-theta * uniform_open(rng));
  if (u2 < q * q) return std::floor(1.0 + std::log(u2) / std::log(q));
  return u2 > q ? 1.0 : 2.0;
}

// Sibuya(alpha) variate, alpha in (0, 1], by inversion of its survival function.
double sample_sibuya(double alpha, Rng& rng) {
  if (alpha >= 1.0) return 1.0;
  const double u = uniform_open(rng);
  if (u <= alpha) return 1.0;
  const double ginv = std::pow((1.0 - u) * std::tgamma(1.0 - alpha), -1.0 / alpha);
  const double fginv = std::floor(ginv);
  if (ginv > 1.0 / DBL_EPSILON) return fginv;
  const double log_beta = std::lgamma(fginv) + std::lgamma(1.0 - alpha) - std::lgamma(fginv + 1.0 - alpha);
  if (1.0 - u < std::exp(-std::log(fginv) - log_beta)) return std::ceil(ginv);
  return fginv;
}

// Bivariate Frank pair by conditional inversion; valid for either sign of theta.
void frank_pair(double theta, Rng& rng, Eigen::Ref<Eigen::VectorXd> e) {
  const double u1 = uniform_open(rng);
  const double v = uniform_open(rng);
  const double num = v * std::expm1(-theta);
  const double den = v + (1.0 - v) * std::exp(-theta * u1);
  double u2 = -std::log1p(num / den) / theta;
  u2 = std::clamp(u2, std::numeric_limits<double>::min(), 1.0 - DBL_EPSILON / 2);
  e[0] = -std::log(u1);
  e[1] = -std::log(u2);
}

}  // namespace

std::string_view to_string(CopulaFamily family) noexcept {
  switch (family) {
    case CopulaFamily::independent:
      return "independent";
    case CopulaFamily::clayton:
      return "clayton";
    case CopulaFamily::frank:
      return "frank";
    case CopulaFamily::joe:
      return "joe";
  }
  return "independent";
}

CopulaFamily parse_copula_family(std::string_view s) {
  if (s == "independent" || s == "independence") return CopulaFamily::independent;
  if (s == "clayton") return CopulaFamily::clayton;
  if (s == "frank") return CopulaFamily::frank;
  if (s == "joe") return CopulaFamily::joe;
  fail(ErrorKind::validation, "unknown copula family '" + std::string(s) + "'");
}

void CopulaSpec::check(Index p) const {
  require(std::isfinite(parameter), ErrorKind::validation, "copula parameter must be finite");
  switch (family) {
    case CopulaFamily::independent:
      break;
    case CopulaFamily::clayton:
      require(parameter > 0.0, ErrorKind::validation, "clayton parameter must be positive");
      break;
    case CopulaFamily::frank:
      require(parameter != 0.0, ErrorKind::validation, "frank parameter must be nonzero");
      require(parameter > 0.0 || p == 2, ErrorKind::validation,
              "negative frank parameters are only supported in dimension 2");
      break;
    case CopulaFamily::joe:
      require(parameter >= 1.0, ErrorKind::validation, "joe parameter must be at least 1");
      break;
  }
}

namespace {

// Draws -log(U) for the components listed in `active` (all when null). Frailty families are
// conditionally iid given the frailty, so skipped components do not change the others' law.
void draw_exponential(const CopulaSpec& spec, Rng& rng, Eigen::Ref<Eigen::VectorXd> e,
                      const std::vector<Index>* active) {
  const Index p = e.size();
  const Index n = active ? static_cast<Index>(active->size()) : p;
  auto at = [&](Index k) { return active ? (*active)[static_cast<std::size_t>(k)] : k; };
  const double theta = spec.parameter;
  switch (spec.family) {
    case CopulaFamily::independent:
      for (Index k = 0; k < n; ++k) e[at(k)] = exp1(rng);
      return;
    case CopulaFamily::clayton: {
      std::gamma_distribution<double> frailty(1.0 / theta, 1.0);
      const double v = std::max(frailty(rng), std::numeric_limits<double>::min());
      for (Index k = 0; k < n; ++k) e[at(k)] = std::log1p(exp1(rng) / v) / theta;
      return;
    }
    case CopulaFamily::frank: {
      if (theta < 0.0) {
        frank_pair(theta, rng, e);
        return;
      }
      const double v = sample_log_series(theta, rng);
      const double a = -std::expm1(-theta);
      for (Index k = 0; k < n; ++k) {
        const double s = exp1(rng) / v;
        const double u = -std::log1p(-a * std::exp(-s)) / theta;
        e[at(k)] = -std::log(std::max(u, std::numeric_limits<double>::min()));
      }
      return;
    }
    case CopulaFamily::joe: {
      const double v = sample_sibuya(1.0 / theta, rng);
      for (Index k = 0; k < n; ++k) {
        const double s = exp1(rng) / v;
        // U = 1 - (1 - exp(-s))^(1/theta)
        const double inner = std::exp(std::log(-std::expm1(-s)) / theta);
        e[at(k)] = -std::log1p(-std::min(inner, 1.0 - DBL_EPSILON / 2));
      }
      return;
    }
  }
}

}  // namespace

void sample_copula_exponential(const CopulaSpec& spec, Rng& rng, Eigen::Ref<Eigen::VectorXd> e) {
  draw_exponential(spec, rng, e, nullptr);
}

void sample_copula(const CopulaSpec& spec, Rng& rng, Eigen::Ref<Eigen::VectorXd> u) {
  spec.check(u.size());
  sample_copula_exponential(spec, rng, u);
  for (Index i = 0; i < u.size(); ++i) {
    u[i] = std::clamp(std::exp(-u[i]), std::numeric_limits<double>::min(), 1.0 - DBL_EPSILON / 2);
  }
}

Eigen::VectorXd sample_copula(const CopulaSpec& spec, Index p, Rng& rng) {
  Eigen::VectorXd u(p);
  sample_copula(spec, rng, u);
  return u;
}

void sample_counts(const Eigen::VectorXd& lambda, const CopulaSpec& copula, Rng& rng,
                   Eigen::Ref<Eigen::VectorXd> counts) {
  const Index p = lambda.size();
  for (Index i = 0; i < p; ++i)
    require(lambda[i] > 0.0 && std::isfinite(lambda[i]), ErrorKind::precondition,
            "intensity must be positive and finite");
  if (copula.family == CopulaFamily::independent) {
    for (Index i = 0; i < p; ++i) counts[i] = static_cast<double>(std::poisson_distribution<long long>(lambda[i])(rng));
    return;
  }
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd e(p);
  counts.setZero();
  std::vector<Index> open(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) open[static_cast<std::size_t>(i)] = i;
  // The pair sampler draws both coordinates jointly, so it cannot skip closed ones.
  const bool joint = copula.family == CopulaFamily::frank && copula.parameter < 0.0;
  while (!open.empty()) {
    draw_exponential(copula, rng, e, joint ? nullptr : &open);
    std::size_t kept = 0;
    for (const Index i : open) {
      cum[i] += e[i];
      if (cum[i] <= lambda[i]) {
        counts[i] += 1.0;
        open[kept++] = i;
      }
    }
    open.resize(kept);
  }
}

Eigen::VectorXd sample_counts(const Eigen::VectorXd& lambda, const CopulaSpec& copula, Rng& rng) {
  copula.check(lambda.size());
  Eigen::VectorXd y(lambda.size());
  sample_counts(lambda, copula, rng, y);
  return y;
}

SimulationResult simulate_path(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                               const CovariatePanel* x, const SimulationConfig& cfg) {
  const Index p = w.p();
  spec.check(w);
  check_shape(theta, spec, p);
  cfg.copula.check(p);
  require(cfg.T >= 1, ErrorKind::precondition, "T must be at least 1");
  require(cfg.burn_in >= 0, ErrorKind::precondition, "burn-in must be nonnegative");
  const bool linear = spec.link == Link::linear;
  if (spec.m() > 0) {
    require(x != nullptr && x->m() == spec.m(), ErrorKind::precondition,
            "model has covariates but no matching covariate panel was supplied");
    require(x->p() == p && x->T() >= cfg.T, ErrorKind::precondition, "covariate panel must cover t = 0..T");
    if (linear) require(x->nonnegative(), ErrorKind::validation, "linear link requires nonnegative covariates");
  }
  const Eigen::VectorXd flat = pack(theta);
  if (linear) {
    require((flat.array() >= 0.0).all(), ErrorKind::validation, "linear link requires nonnegative parameters");
    require((theta.delta.array() > 0.0).all(), ErrorKind::validation, "linear link requires a positive intercept");
    require(stationarity_margin(theta, spec, w, StationarityCriterion::coefficient_sum) > 0.0, ErrorKind::validation,
            "linear link requires a coefficient sum below 1 for the covariate-free burn-in");
  }

  // Start of burn-in: the covariate-free stationary mean if it exists, otherwise delta.
  Eigen::VectorXd eta0;
  if (cfg.initial_state) {
    require(cfg.initial_state->size() == p, ErrorKind::precondition, "initial state has the wrong length");
    eta0 = *cfg.initial_state;
  } else {
    const Eigen::VectorXd delta =
        theta.delta.size() == 1 ? Eigen::VectorXd::Constant(p, theta.delta[0]) : theta.delta;
    if (stationarity_margin(theta, spec, w, StationarityCriterion::coefficient_sum) > 0.0) {
      ModelSpec linear_spec = spec;
      linear_spec.link = Link::linear;
      linear_spec.s.clear();
      ParameterVector free = theta;
      free.gamma.clear();
      eta0 = stationary_mean(free, linear_spec, w);
    } else {
      eta0 = delta;
    }
  }
  const Eigen::VectorXd z0 = linear ? eta0 : Eigen::VectorXd(eta0.array().exp().log1p());

  const Index n_delta = spec.intercept_size(p);
  const Index steps = cfg.burn_in + cfg.T + 1;
  std::deque<Eigen::VectorXd> eta_hist(static_cast<std::size_t>(std::max(spec.q(), 1)), eta0);
  std::deque<Eigen::VectorXd> z_hist(static_cast<std::size_t>(std::max(spec.r(), 1)), z0);
  std::vector<Eigen::VectorXd> xcol(static_cast<std::size_t>(spec.m()));

  SimulationResult out;
  Eigen::MatrixXd y(p, cfg.T + 1);
  out.intensity.resize(p, cfg.T + 1);
  out.predictor.resize(p, cfg.T + 1);
  Eigen::MatrixXd r(p, detail::regressor_count(spec));
  Eigen::VectorXd eta(p), lambda(p), counts(p);
  Rng rng = make_rng(cfg.seed);

  for (Index step = 0; step < steps; ++step) {
    const Index t = step - cfg.burn_in;
    const bool with_x = t >= 0 && spec.m() > 0;
    if (with_x)
      for (int k = 0; k < spec.m(); ++k) xcol[static_cast<std::size_t>(k)] = x->process(k).col(t);
    detail::fill_regressors(
        spec, w, [&](int i) -> const Eigen::VectorXd& { return eta_hist[static_cast<std::size_t>(i - 1)]; },
        [&](int j) -> const Eigen::VectorXd& { return z_hist[static_cast<std::size_t>(j - 1)]; },
        [&](int k) -> const Eigen::VectorXd* { return with_x ? &xcol[static_cast<std::size_t>(k)] : nullptr; }, r);
    detail::linear_predictor(flat, n_delta, r, eta);
    if (linear) {
      lambda = eta;
    } else {
      lambda = eta.array().exp();
    }
    const double top = lambda.maxCoeff();
    if (!std::isfinite(top) || top > kMaxIntensity)
      fail(ErrorKind::numerical, "intensity exceeded 1e12 at simulation step " + std::to_string(step) +
                                     "; the parameters are likely explosive");
    if (!(lambda.minCoeff() > 0.0))
      fail(ErrorKind::numerical, "non-positive intensity at simulation step " + std::to_string(step));
    sample_counts(lambda, cfg.copula, rng, counts);
    if (t >= 0) {
      y.col(t) = counts;
      out.intensity.col(t) = lambda;
      out.predictor.col(t) = eta;
    }
    eta_hist.pop_back();
    eta_hist.push_front(eta);
    z_hist.pop_back();
    z_hist.push_front(linear ? counts : Eigen::VectorXd(counts.array().log1p()));
  }
  out.counts = CountPanel(std::move(y));
  return out;
}

CovariatePanel generate_arma_covariate(Index p, Index T, std::uint64_t seed, const ArmaCovariateConfig& cfg) {
  require(p >= 1 && T >= 0, ErrorKind::precondition, "invalid covariate dimensions");
  require(std::abs(cfg.ar) < 1.0, ErrorKind::validation, "ARMA covariate requires |ar| < 1");
  require(cfg.warmup >= 0, ErrorKind::precondition, "warm-up must be nonnegative");
  Rng rng = make_rng(seed);
  Eigen::MatrixXd x(p, T + 1);
  const double mean = 0.5 * (1.0 + cfg.ma) / (1.0 - cfg.ar);
  for (Index i = 0; i < p; ++i) {
    double prev = mean;
    double prev_eps = 0.5;
    for (Index s = -cfg.warmup; s <= T; ++s) {
      const double eps = uniform_open(rng);
      const double v = cfg.ar * prev + eps + cfg.ma * prev_eps;
      if (s >= 0) x(i, s) = v;
      prev = v;
      prev_eps = eps;
    }
  }
  if (cfg.center) x.array() -= mean;
  if (cfg.shift_nonnegative) {
    const double lo = x.minCoeff();
    if (lo < 0.0) x.array() -= lo;
  }
  return CovariatePanel({x});
}

}  // namespace pstarmax
