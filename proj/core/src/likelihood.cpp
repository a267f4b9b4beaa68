#include "pstarmax/likelihood.hpp"

#include "pstarmax/error.hpp"
#include "recursion.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

namespace pstarmax {

namespace {

constexpr double kMaxLogIntensity = 700.0;

// Log-likelihood contribution and the weights entering score and H at one time point.
// Linear: w = (y - lambda) / lambda, h = 1 / lambda; log-linear: w = y - exp(nu), h = exp(nu).
struct CellTerms {
  double loglik;
  bool finite;
};

CellTerms cell_terms(Link link, const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::VectorXd& eta,
                     Eigen::VectorXd* w, Eigen::VectorXd* h) {
  double ll = 0.0;
  const Index p = y.size();
  for (Index i = 0; i < p; ++i) {
    const double e = eta[i];
    if (!std::isfinite(e)) return {0.0, false};
    if (link == Link::linear) {
      const double lf = std::max(e, kIntensityFloor);
      ll += (y[i] > 0.0 ? y[i] * std::log(lf) : 0.0) - e;
      if (w != nullptr) (*w)[i] = (y[i] - e) / lf;
      if (h != nullptr) (*h)[i] = 1.0 / lf;
    } else {
      if (e > kMaxLogIntensity) return {0.0, false};
      const double mu = std::exp(e);
      ll += y[i] * e - mu;
      if (w != nullptr) (*w)[i] = y[i] - mu;
      if (h != nullptr) (*h)[i] = mu;
    }
  }
  return {ll, true};
}

void check_linear_domain(const ParameterVector& theta, const ModelSpec& spec) {
  if (spec.link != Link::linear) return;
  const Eigen::VectorXd flat = pack(theta);
  require((flat.array() >= 0.0).all(), ErrorKind::validation, "linear link requires nonnegative parameters");
}

}  // namespace

std::string_view to_string(InitStrategy s) noexcept {
  switch (s) {
    case InitStrategy::first_obs:
      return "first_obs";
    case InitStrategy::global_mean:
      return "global_mean";
    case InitStrategy::zero:
      return "zero";
    case InitStrategy::supplied:
      return "supplied";
  }
  return "first_obs";
}

InitStrategy parse_init(std::string_view s) {
  if (s == "first_obs" || s == "first-obs") return InitStrategy::first_obs;
  if (s == "global_mean" || s == "global-mean") return InitStrategy::global_mean;
  if (s == "zero") return InitStrategy::zero;
  if (s == "supplied") return InitStrategy::supplied;
  fail(ErrorKind::validation, "unknown init strategy '" + std::string(s) + "'");
}

Eigen::MatrixXd initial_predictor(const ModelSpec& spec, const CountPanel& y, const FilterOptions& options) {
  const Index t0 = spec.first_time();
  const Index p = y.p();
  require(y.T() + 1 >= t0, ErrorKind::precondition, "count panel is shorter than the initial window");
  const bool linear = spec.link == Link::linear;
  switch (options.init) {
    case InitStrategy::first_obs: {
      const Eigen::MatrixXd head = y.values().leftCols(t0);
      return linear ? head : Eigen::MatrixXd(head.array().log1p());
    }
    case InitStrategy::global_mean: {
      const Index n = y.T() > 0 ? y.T() : 1;
      const Eigen::VectorXd ybar = y.values().rightCols(n).rowwise().mean();
      const Eigen::VectorXd v = linear ? ybar : Eigen::VectorXd(ybar.array().log1p());
      return v.replicate(1, t0);
    }
    case InitStrategy::zero:
      return Eigen::MatrixXd::Zero(p, t0);
    case InitStrategy::supplied:
      require(options.supplied.has_value() && options.supplied->rows() == p && options.supplied->cols() >= t0,
              ErrorKind::precondition, "supplied initial values must be p x " + std::to_string(t0));
      return options.supplied->leftCols(t0);
  }
  return Eigen::MatrixXd::Zero(p, t0);
}

QuasiLikelihood::QuasiLikelihood(ModelSpec spec, const WeightMatrixSet& w, const CountPanel& y,
                                 const CovariatePanel* x, FilterOptions options)
    : spec_(std::move(spec)), w_(w), y_(y), options_(std::move(options)) {
  spec_.check(w_);
  p_ = w_.p();
  require(y_.p() == p_, ErrorKind::precondition,
          "count panel has " + std::to_string(y_.p()) + " locations, weights have " + std::to_string(p_));
  T_ = y_.T();
  t0_ = spec_.first_time();
  require(T_ >= t0_, ErrorKind::precondition,
          "insufficient observations: T = " + std::to_string(T_) + " but the model needs T >= " +
              std::to_string(t0_));
  if (spec_.m() > 0) {
    require(x != nullptr && x->m() == spec_.m(), ErrorKind::precondition,
            "model expects " + std::to_string(spec_.m()) + " covariates");
    require(x->p() == p_ && x->T() >= T_, ErrorKind::precondition, "covariate panel must cover t = 0..T");
    if (spec_.link == Link::linear)
      require(x->nonnegative(), ErrorKind::validation, "linear link requires nonnegative covariates");
  }
  n_delta_ = spec_.intercept_size(p_);
  k_ = spec_.parameter_count(p_);
  n_feedback_ = 0;
  for (int a : spec_.a) n_feedback_ += a + 1;
  n_fixed_ = k_ - n_delta_ - n_feedback_;

  Eigen::MatrixXd z = y_.values();
  if (spec_.link == Link::log_linear) z = z.array().log1p().matrix();

  fixed_.setZero(p_, n_fixed_ * (T_ + 1));
  for (Index t = t0_; t <= T_; ++t) {
    Index c = t * n_fixed_;
    for (int j = 1; j <= spec_.r(); ++j)
      for (int l = 0; l <= spec_.b[static_cast<std::size_t>(j - 1)]; ++l) w_[l].apply(z.col(t - j), fixed_.col(c++));
    for (int k = 0; k < spec_.m(); ++k) {
      const Eigen::VectorXd xt = x->process(k).col(t);
      for (int l = 0; l <= spec_.s[static_cast<std::size_t>(k)]; ++l) w_[l].apply(xt, fixed_.col(c++));
    }
  }

  init_ = initial_predictor(spec_, y_, options_);
}

void QuasiLikelihood::initial_columns(Eigen::MatrixXd& eta) const {
  eta.resize(p_, T_ + 1);
  eta.leftCols(t0_) = init_;
}

void QuasiLikelihood::fill(Index t, const Eigen::MatrixXd& eta, Eigen::MatrixXd& r) const {
  Index c = 0;
  for (int i = 1; i <= spec_.q(); ++i) {
    for (int l = 0; l <= spec_.a[static_cast<std::size_t>(i - 1)]; ++l) w_[l].apply(eta.col(t - i), r.col(c++));
  }
  if (n_fixed_ > 0) r.rightCols(n_fixed_) = fixed_.middleCols(t * n_fixed_, n_fixed_);
}

double QuasiLikelihood::value(const Eigen::VectorXd& theta) const {
  require(theta.size() == k_, ErrorKind::precondition, "parameter vector has the wrong length");
  Eigen::MatrixXd eta;
  initial_columns(eta);
  Eigen::MatrixXd r(p_, k_ - n_delta_);
  Eigen::VectorXd e(p_);
  double ll = 0.0;
  for (Index t = t0_; t <= T_; ++t) {
    fill(t, eta, r);
    detail::linear_predictor(theta, n_delta_, r, e);
    eta.col(t) = e;
    const auto terms = cell_terms(spec_.link, y_.values().col(t), e, nullptr, nullptr);
    if (!terms.finite) return -std::numeric_limits<double>::infinity();
    ll += terms.loglik;
  }
  return ll;
}

QuasiLikelihood::Evaluation QuasiLikelihood::evaluate(const Eigen::VectorXd& theta, bool with_info,
                                                      bool materialize) const {
  require(theta.size() == k_, ErrorKind::precondition, "parameter vector has the wrong length");
  const int q = spec_.q();
  Eigen::MatrixXd eta;
  initial_columns(eta);
  Eigen::MatrixXd r(p_, k_ - n_delta_);
  Eigen::VectorXd e(p_), wt(p_), ht(p_), st(k_);
  Eigen::MatrixXd dt(p_, k_), scaled;

  // Derivative panels dlambda_t/dtheta (or dnu_t/dtheta); zero before t0.
  const std::size_t slots = materialize ? static_cast<std::size_t>(T_ + 1) : static_cast<std::size_t>(q);
  std::vector<Eigen::MatrixXd> panels(slots, Eigen::MatrixXd::Zero(p_, k_));
  auto slot = [&](Index t) -> Eigen::MatrixXd& {
    return panels[static_cast<std::size_t>(materialize ? t : t % q)];
  };

  Evaluation out;
  out.score = Eigen::VectorXd::Zero(k_);
  if (with_info) {
    out.H = Eigen::MatrixXd::Zero(k_, k_);
    out.G = Eigen::MatrixXd::Zero(k_, k_);
  }
  for (Index t = t0_; t <= T_; ++t) {
    fill(t, eta, r);
    detail::linear_predictor(theta, n_delta_, r, e);
    eta.col(t) = e;
    const auto terms = cell_terms(spec_.link, y_.values().col(t), e, &wt, &ht);
    if (!terms.finite) {
      out.loglik = -std::numeric_limits<double>::infinity();
      out.score.setConstant(std::numeric_limits<double>::quiet_NaN());
      return out;
    }
    out.loglik += terms.loglik;

    if (n_delta_ == 1) {
      dt.col(0).setOnes();
    } else {
      dt.leftCols(n_delta_).setIdentity();
    }
    dt.rightCols(k_ - n_delta_) = r;
    for (int i = 1; i <= q; ++i) {
      if (t - i < t0_) continue;
      const Eigen::MatrixXd& prev = slot(t - i);
      Index off = n_delta_;
      for (int ii = 1; ii < i; ++ii) off += spec_.a[static_cast<std::size_t>(ii - 1)] + 1;
      for (int l = 0; l <= spec_.a[static_cast<std::size_t>(i - 1)]; ++l) {
        const double coef = theta[off + l];
        if (coef != 0.0) w_[l].apply_add(coef, prev, dt);
      }
    }
    st.noalias() = dt.transpose() * wt;
    out.score += st;
    if (with_info) {
      scaled = dt.array().colwise() * ht.array().sqrt();
      out.H.noalias() += scaled.transpose() * scaled;
      out.G.noalias() += st * st.transpose();
    }
    if (materialize || q > 0) slot(t) = dt;
  }
  if (with_info) {
    const double n = static_cast<double>(n_obs());
    out.H = (out.H + out.H.transpose()).eval() / (2.0 * n);
    out.G = (out.G + out.G.transpose()).eval() / (2.0 * n);
  }
  return out;
}

FilterState QuasiLikelihood::filter(const Eigen::VectorXd& theta) const {
  require(theta.size() == k_, ErrorKind::precondition, "parameter vector has the wrong length");
  FilterState state;
  state.link = spec_.link;
  state.init = options_.init;
  state.t0 = t0_;
  initial_columns(state.predictor);
  Eigen::MatrixXd r(p_, k_ - n_delta_);
  Eigen::VectorXd e(p_);
  for (Index t = t0_; t <= T_; ++t) {
    fill(t, state.predictor, r);
    detail::linear_predictor(theta, n_delta_, r, e);
    state.predictor.col(t) = e;
  }
  state.intensity =
      spec_.link == Link::linear ? state.predictor : Eigen::MatrixXd(state.predictor.array().exp());
  return state;
}

FilterState filter_intensity(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                             const CountPanel& y, const CovariatePanel* x, const FilterOptions& options) {
  check_shape(theta, spec, w.p());
  check_linear_domain(theta, spec);
  return QuasiLikelihood(spec, w, y, x, options).filter(pack(theta));
}

double quasi_log_lik(const FilterState& state, const CountPanel& y) {
  require(state.predictor.rows() == y.p() && state.predictor.cols() == y.T() + 1, ErrorKind::precondition,
          "filter state is not aligned with the count panel");
  double ll = 0.0;
  for (Index t = state.t0; t <= y.T(); ++t) {
    const Eigen::VectorXd e = state.predictor.col(t);
    ll += cell_terms(state.link, y.values().col(t), e, nullptr, nullptr).loglik;
  }
  return ll;
}

Eigen::VectorXd score(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                      const CountPanel& y, const CovariatePanel* x, const FilterOptions& options) {
  check_shape(theta, spec, w.p());
  check_linear_domain(theta, spec);
  return QuasiLikelihood(spec, w, y, x, options).evaluate(pack(theta), false).score;
}

InfoMatrices info_matrices(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                           const CountPanel& y, const CovariatePanel* x, const FilterOptions& options) {
  check_shape(theta, spec, w.p());
  check_linear_domain(theta, spec);
  auto ev = QuasiLikelihood(spec, w, y, x, options).evaluate(pack(theta), true);
  require(std::isfinite(ev.loglik), ErrorKind::numerical, "intensities are not finite at these parameters");
  InfoMatrices out;
  out.H = std::move(ev.H);
  out.G = std::move(ev.G);
  out.sandwich = sandwich(out.H, out.G);
  return out;
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& h, const Eigen::MatrixXd& g) {
  require(h.rows() == h.cols() && g.rows() == h.rows() && g.cols() == h.cols(), ErrorKind::precondition,
          "H and G must be square and of equal size");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 1e-13 * smax) || !std::isfinite(smax)) {
    const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    fail(ErrorKind::numerical, "information matrix H is singular (condition number " + std::to_string(cond) + ")");
  }
  const Eigen::MatrixXd hinv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  const Eigen::MatrixXd s = hinv * g * hinv.transpose();
  return (s + s.transpose()) / 2.0;
}

}  // namespace pstarmax
