#include "pstarmax/model.hpp"

#include "pstarmax/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>

namespace pstarmax {

namespace {

std::string normalise(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}

int max_of(const std::vector<int>& v) { return v.empty() ? 0 : *std::max_element(v.begin(), v.end()); }

double abs_sum(const std::vector<std::vector<double>>& blocks) {
  double s = 0.0;
  for (const auto& b : blocks)
    for (double v : b) s += std::abs(v);
  return s;
}

// Combined weight per spatial order: c_l = sum_i alpha_il + sum_j beta_jl.
std::vector<double> dynamic_order_weights(const ParameterVector& theta) {
  std::vector<double> c;
  auto add = [&c](const std::vector<std::vector<double>>& blocks) {
    for (const auto& b : blocks) {
      if (b.size() > c.size()) c.resize(b.size(), 0.0);
      for (std::size_t l = 0; l < b.size(); ++l) c[l] += b[l];
    }
  };
  add(theta.alpha);
  add(theta.beta);
  return c;
}

Eigen::MatrixXd combine(const std::vector<double>& coef, const WeightMatrixSet& w) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(w.p(), w.p());
  for (std::size_t l = 0; l < coef.size(); ++l) {
    if (coef[l] == 0.0) continue;
    w[static_cast<int>(l)].for_each_nonzero([&](Index i, Index j, double v) { out(i, j) += coef[l] * v; });
  }
  return out;
}

void check_weights(const ModelSpec& spec, const WeightMatrixSet& w) {
  require(w.size() > 0, ErrorKind::precondition, "empty weight matrix set");
  spec.check(w);
}

}  // namespace

std::string_view to_string(Link link) noexcept {
  return link == Link::linear ? "linear" : "log_linear";
}

std::string_view to_string(InterceptKind kind) noexcept {
  return kind == InterceptKind::homogeneous ? "homogeneous" : "inhomogeneous";
}

Link parse_link(std::string_view s) {
  const auto n = normalise(s);
  if (n == "linear") return Link::linear;
  if (n == "log_linear" || n == "loglinear") return Link::log_linear;
  fail(ErrorKind::validation, "unknown link '" + std::string(s) + "'");
}

InterceptKind parse_intercept(std::string_view s) {
  if (s == "homogeneous") return InterceptKind::homogeneous;
  if (s == "inhomogeneous") return InterceptKind::inhomogeneous;
  fail(ErrorKind::validation, "unknown intercept kind '" + std::string(s) + "'");
}

std::string_view to_string(StationarityCriterion c) noexcept {
  return c == StationarityCriterion::coefficient_sum ? "coefficient_sum" : "tau_adjusted";
}

StationarityCriterion parse_criterion(std::string_view s) {
  const auto n = normalise(s);
  if (n == "coefficient_sum") return StationarityCriterion::coefficient_sum;
  if (n == "tau_adjusted") return StationarityCriterion::tau_adjusted;
  fail(ErrorKind::validation, "unknown stationarity criterion '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// ModelSpec / layout

int ModelSpec::max_spatial_order() const noexcept {
  return std::max({max_of(a), max_of(b), max_of(s)});
}

int ModelSpec::first_time() const noexcept { return std::max({1, q(), r()}); }

Index ModelSpec::parameter_count(Index p) const noexcept {
  Index k = intercept_size(p);
  for (const auto* v : {&a, &b, &s})
    for (int o : *v) k += o + 1;
  return k;
}

void ModelSpec::check(const WeightMatrixSet& w) const {
  for (const auto* v : {&a, &b, &s})
    for (int o : *v) {
      require(o >= 0, ErrorKind::validation, "spatial orders must be nonnegative");
      require(o <= w.max_order(), ErrorKind::validation,
              "spatial order " + std::to_string(o) + " exceeds the weight set's maximum order " +
                  std::to_string(w.max_order()));
    }
  require(r() > 0 || m() > 0, ErrorKind::validation,
          "model without observation lags or covariates is not identifiable");
}

ParameterLayout::ParameterLayout(const ModelSpec& spec, Index p)
    : n_delta_(spec.intercept_size(p)), a_(spec.a), b_(spec.b), s_(spec.s) {
  Index off = n_delta_;
  auto place = [&off](const std::vector<int>& orders, std::vector<Index>& starts) {
    for (int o : orders) {
      starts.push_back(off);
      off += o + 1;
    }
  };
  place(a_, alpha_);
  place(b_, beta_);
  place(s_, gamma_);
  size_ = off;
}

std::vector<Index> ParameterLayout::dynamic_indices() const {
  const Index first = n_delta_;
  const Index last = gamma_.empty() ? size_ : gamma_.front();
  std::vector<Index> idx(static_cast<std::size_t>(last - first));
  std::iota(idx.begin(), idx.end(), first);
  return idx;
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(size_));
  if (n_delta_ == 1) {
    out.emplace_back("delta0");
  } else {
    for (Index i = 0; i < n_delta_; ++i) out.push_back("delta[" + std::to_string(i + 1) + "]");
  }
  auto block = [&out](const char* name, const std::vector<int>& orders) {
    for (std::size_t i = 0; i < orders.size(); ++i)
      for (int l = 0; l <= orders[i]; ++l)
        out.push_back(std::string(name) + "[" + std::to_string(i + 1) + "][" + std::to_string(l) + "]");
  };
  block("alpha", a_);
  block("beta", b_);
  block("gamma", s_);
  return out;
}

// ---------------------------------------------------------------------------
// Packing

Eigen::VectorXd pack(const ParameterVector& theta) {
  Index k = theta.delta.size();
  for (const auto* blocks : {&theta.alpha, &theta.beta, &theta.gamma})
    for (const auto& b : *blocks) k += static_cast<Index>(b.size());
  Eigen::VectorXd flat(k);
  Index pos = 0;
  for (Index i = 0; i < theta.delta.size(); ++i) flat[pos++] = theta.delta[i];
  for (const auto* blocks : {&theta.alpha, &theta.beta, &theta.gamma})
    for (const auto& b : *blocks)
      for (double v : b) flat[pos++] = v;
  return flat;
}

ParameterVector unpack(const Eigen::VectorXd& flat, const ModelSpec& spec, Index p) {
  const Index k = spec.parameter_count(p);
  require(flat.size() == k, ErrorKind::precondition,
          "parameter vector has length " + std::to_string(flat.size()) + ", expected " + std::to_string(k));
  ParameterVector theta;
  const Index nd = spec.intercept_size(p);
  theta.delta = flat.head(nd);
  Index pos = nd;
  auto take = [&](const std::vector<int>& orders, std::vector<std::vector<double>>& blocks) {
    for (int o : orders) {
      blocks.emplace_back(flat.data() + pos, flat.data() + pos + o + 1);
      pos += o + 1;
    }
  };
  take(spec.a, theta.alpha);
  take(spec.b, theta.beta);
  take(spec.s, theta.gamma);
  return theta;
}

void check_shape(const ParameterVector& theta, const ModelSpec& spec, Index p) {
  require(theta.delta.size() == spec.intercept_size(p), ErrorKind::precondition,
          "intercept has length " + std::to_string(theta.delta.size()) + ", expected " +
              std::to_string(spec.intercept_size(p)));
  auto check = [](const char* name, const std::vector<std::vector<double>>& blocks, const std::vector<int>& orders) {
    require(blocks.size() == orders.size(), ErrorKind::precondition,
            std::string(name) + " has " + std::to_string(blocks.size()) + " lags, expected " +
                std::to_string(orders.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i)
      require(blocks[i].size() == static_cast<std::size_t>(orders[i]) + 1, ErrorKind::precondition,
              std::string(name) + " lag " + std::to_string(i + 1) + " has the wrong number of spatial orders");
  };
  check("alpha", theta.alpha, spec.a);
  check("beta", theta.beta, spec.b);
  check("gamma", theta.gamma, spec.s);
  for (Index i = 0; i < theta.delta.size(); ++i)
    require(std::isfinite(theta.delta[i]), ErrorKind::validation, "non-finite intercept");
  for (const auto* blocks : {&theta.alpha, &theta.beta, &theta.gamma})
    for (const auto& b : *blocks)
      for (double v : b) require(std::isfinite(v), ErrorKind::validation, "non-finite coefficient");
}

// ---------------------------------------------------------------------------
// Panels

CountPanel::CountPanel(Eigen::MatrixXd counts) : y_(std::move(counts)) {
  require(y_.rows() > 0 && y_.cols() > 0, ErrorKind::validation, "count panel is empty");
  for (Index t = 0; t < y_.cols(); ++t)
    for (Index i = 0; i < y_.rows(); ++i) {
      const double v = y_(i, t);
      require(std::isfinite(v) && v >= 0.0 && v == std::floor(v), ErrorKind::validation,
              "count at location " + std::to_string(i + 1) + ", t = " + std::to_string(t) +
                  " is not a nonnegative integer");
    }
}

CountPanel CountPanel::slice(Index first, Index last) const {
  require(first >= 0 && last >= first && last < y_.cols(), ErrorKind::precondition, "invalid time slice");
  return CountPanel(y_.middleCols(first, last - first + 1));
}

std::string CountPanel::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(y_.rows()));
  mix(static_cast<std::uint64_t>(y_.cols()));
  for (Index k = 0; k < y_.size(); ++k) mix(std::bit_cast<std::uint64_t>(y_.data()[k]));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CovariatePanel::CovariatePanel(std::vector<Eigen::MatrixXd> processes) : x_(std::move(processes)) {
  for (const auto& x : x_) {
    require(x.rows() == x_.front().rows() && x.cols() == x_.front().cols(), ErrorKind::validation,
            "covariate processes must share dimensions");
    require(x.allFinite(), ErrorKind::validation, "covariate values must be finite");
  }
}

bool CovariatePanel::nonnegative() const {
  return std::all_of(x_.begin(), x_.end(), [](const Eigen::MatrixXd& x) { return (x.array() >= 0.0).all(); });
}

CovariatePanel CovariatePanel::slice(Index first, Index last) const {
  require(first >= 0 && last >= first && last <= T(), ErrorKind::precondition, "invalid time slice");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(x_.size());
  for (const auto& x : x_) out.emplace_back(x.middleCols(first, last - first + 1));
  return CovariatePanel(std::move(out));
}

// ---------------------------------------------------------------------------
// Coefficient matrices and stationarity

CoefficientMatrices coefficient_matrices(const ParameterVector& theta, const ModelSpec& spec,
                                         const WeightMatrixSet& w) {
  check_weights(spec, w);
  check_shape(theta, spec, w.p());
  CoefficientMatrices out;
  for (const auto& a : theta.alpha) out.A.push_back(combine(a, w));
  for (const auto& b : theta.beta) out.B.push_back(combine(b, w));
  return out;
}

double stationarity_margin(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                           StationarityCriterion criterion) {
  check_shape(theta, spec, w.p());
  const double sum = abs_sum(theta.alpha) + abs_sum(theta.beta);
  if (criterion == StationarityCriterion::coefficient_sum) return 1.0 - sum;
  return 1.0 / std::sqrt(column_sum_norm_tau(w)) - sum;
}

double spectral_stationarity_norm(const ParameterVector& theta, const ModelSpec& spec,
                                  const WeightMatrixSet& w) {
  const auto mats = coefficient_matrices(theta, spec, w);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(w.p(), w.p());
  for (const auto& a : mats.A) total += a.cwiseAbs();
  for (const auto& b : mats.B) total += b.cwiseAbs();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(total);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Identifiability

ValidationReport check_identifiability(const ModelSpec& spec, const WeightMatrixSet& w, const CovariatePanel* x,
                                       const CountPanel* y) {
  ValidationReport report;
  const Index p = w.p();
  if (spec.r() == 0 && spec.m() == 0) {
    report.add_error("no_observation_lags",
                     "no observation lags and no covariates: feedback parameters are not identifiable");
  } else if (spec.r() == 0) {
    report.add_warning("covariate_only", "no observation lags: pure covariate regression with feedback");
  }

  if (x != nullptr && !x->empty()) {
    if (x->m() != spec.m()) {
      report.add_error("covariate_count", "covariate panel has " + std::to_string(x->m()) +
                                              " processes but the model expects " + std::to_string(spec.m()));
      return report;
    }
    if (x->p() != p) {
      report.add_error("covariate_dimension", "covariate panel has the wrong number of locations");
      return report;
    }
    for (int k = 0; k < spec.m(); ++k) {
      const auto& xk = x->process(k);
      auto close = [](double u, double v) { return std::abs(u - v) <= 1e-12 * (1.0 + std::abs(v)); };
      if (spec.s[static_cast<std::size_t>(k)] > 0) {
        bool constant = true;
        for (Index t = 0; t < xk.cols() && constant; ++t)
          for (Index i = 1; i < p && constant; ++i) constant = close(xk(i, t), xk(0, t));
        if (constant)
          report.add_error("spatially_constant_covariate",
                           "covariate " + std::to_string(k + 1) +
                               " is spatially constant, so its spatial lags are not identifiable");
      }
      if (spec.intercept == InterceptKind::inhomogeneous) {
        bool constant = true;
        for (Index t = 1; t < xk.cols() && constant; ++t)
          for (Index i = 0; i < p && constant; ++i) constant = close(xk(i, t), xk(i, 0));
        if (constant)
          report.add_error("time_constant_covariate",
                           "covariate " + std::to_string(k + 1) +
                               " is constant in time and confounded with the location intercepts");
      }
    }
  } else if (spec.m() > 0 && y != nullptr) {
    report.add_error("covariate_count", "model expects covariates but none were supplied");
    return report;
  }

  if (y == nullptr || !report.ok()) return report;
  if (y->p() != p) {
    report.add_error("count_dimension", "count panel has the wrong number of locations");
    return report;
  }
  if (x != nullptr && !x->empty() && x->T() < y->T()) {
    report.add_error("covariate_dimension", "covariate panel is shorter than the count panel");
    return report;
  }

  const Index t0 = spec.first_time();
  const Index T = y->T();
  if (T < t0) return report;
  const Index rows = p * (T - t0 + 1);
  const Index nd = spec.intercept_size(p);
  Index cols = nd;
  for (int b : spec.b) cols += b + 1;
  for (int s : spec.s) cols += s + 1;
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd z = y->values();
  if (spec.link == Link::log_linear) z = z.array().log1p().matrix();
  Eigen::VectorXd tmp(p);
  for (Index t = t0; t <= T; ++t) {
    const Index r0 = (t - t0) * p;
    if (nd == 1) {
      design.block(r0, 0, p, 1).setOnes();
    } else {
      design.block(r0, 0, p, p).setIdentity();
    }
    Index c = nd;
    for (int j = 1; j <= spec.r(); ++j)
      for (int l = 0; l <= spec.b[static_cast<std::size_t>(j - 1)]; ++l) {
        w[l].apply(z.col(t - j), tmp);
        design.block(r0, c++, p, 1) = tmp;
      }
    for (int k = 0; k < spec.m(); ++k)
      for (int l = 0; l <= spec.s[static_cast<std::size_t>(k)]; ++l) {
        w[l].apply(x->process(k).col(t), tmp);
        design.block(r0, c++, p, 1) = tmp;
      }
  }
  for (Index c = 0; c < cols; ++c) {
    const double n = design.col(c).norm();
    if (n == 0.0) {
      report.add_error("design_rank_deficient", "design column " + std::to_string(c) + " is identically zero");
      return report;
    }
    design.col(c) /= n;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(design);
  const auto& sv = svd.singularValues();
  const Index rank = (sv.array() > 1e-8 * sv(0)).count();
  if (rank < cols)
    report.add_error("design_rank_deficient", "design matrix has numerical rank " + std::to_string(rank) + " < " +
                                                  std::to_string(cols) + " columns");
  return report;
}

// ---------------------------------------------------------------------------
// Moments

Eigen::VectorXd stationary_mean(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                                const std::optional<Eigen::VectorXd>& mean_covariate_term) {
  require(spec.link == Link::linear, ErrorKind::unsupported,
          "unsupported: closed-form moments exist only for the linear link");
  check_weights(spec, w);
  check_shape(theta, spec, w.p());
  require(stationarity_margin(theta, spec, w, StationarityCriterion::coefficient_sum) > 0.0,
          ErrorKind::precondition, "stationary mean requires a positive coefficient-sum margin");
  const Index p = w.p();
  Eigen::VectorXd rhs = theta.delta.size() == 1 ? Eigen::VectorXd::Constant(p, theta.delta[0]) : theta.delta;
  if (mean_covariate_term) {
    require(mean_covariate_term->size() == p, ErrorKind::precondition, "covariate term has the wrong length");
    rhs += *mean_covariate_term;
  }
  const auto coef = dynamic_order_weights(theta);

  if (p <= 400) {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(p, p) - combine(coef, w);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    require(lu.isInvertible(), ErrorKind::numerical, "I - sum A - sum B is singular");
    return lu.solve(rhs);
  }

  // Large p: fixed-point iteration, a contraction in the sup norm when the margin is positive.
  Eigen::VectorXd mu = rhs;
  Eigen::VectorXd next(p);
  for (int it = 0; it < 100000; ++it) {
    next = rhs;
    for (std::size_t l = 0; l < coef.size(); ++l)
      if (coef[l] != 0.0) w[static_cast<int>(l)].apply_add(coef[l], mu, next);
    const double change = (next - mu).lpNorm<Eigen::Infinity>();
    mu.swap(next);
    if (change <= 1e-15 * std::max(1.0, mu.lpNorm<Eigen::Infinity>())) return mu;
  }
  fail(ErrorKind::numerical, "stationary mean iteration did not converge");
}

Eigen::MatrixXd autocovariance(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                               int lag, const std::optional<Eigen::MatrixXd>& sigma) {
  require(spec.link == Link::linear, ErrorKind::unsupported,
          "unsupported: closed-form moments exist only for the linear link");
  require(spec.q() <= 1 && spec.r() == 1 && spec.m() == 0, ErrorKind::unsupported,
          "unsupported: autocovariance is available for first-order models without covariates only");
  require(lag >= 0, ErrorKind::precondition, "lag must be nonnegative");
  const Index p = w.p();
  const auto mats = coefficient_matrices(theta, spec, w);
  const Eigen::MatrixXd a = mats.A.empty() ? Eigen::MatrixXd::Zero(p, p) : mats.A.front();
  const Eigen::MatrixXd& b = mats.B.front();
  Eigen::MatrixXd s;
  if (sigma) {
    require(sigma->rows() == p && sigma->cols() == p, ErrorKind::precondition, "Sigma must be p x p");
    s = *sigma;
  } else {
    s = stationary_mean(theta, spec, w).asDiagonal();
  }
  require(stationarity_margin(theta, spec, w, StationarityCriterion::coefficient_sum) > 0.0,
          ErrorKind::precondition, "autocovariance requires a positive coefficient-sum margin");

  const Eigen::MatrixXd m = a + b;
  // Var(lambda) solves X = M X M' + B S B'. Smith doubling sums M^k Q M'^k in O(log) squarings,
  // the same quantity as the vec / Kronecker expression without forming p^2 x p^2 systems.
  Eigen::MatrixXd x = b * s * b.transpose();
  Eigen::MatrixXd mk = m;
  for (int it = 0; it < 64; ++it) {
    const Eigen::MatrixXd inc = mk * x * mk.transpose();
    x += inc;
    if (inc.lpNorm<Eigen::Infinity>() <= 1e-17 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) break;
    mk = mk * mk;
  }
  const Eigen::MatrixXd gamma0 = s + x;
  if (lag == 0) return gamma0;
  Eigen::MatrixXd g = m * gamma0 - a * s;
  for (int h = 2; h <= lag; ++h) g = m * g;
  return g;
}

}  // namespace pstarmax
