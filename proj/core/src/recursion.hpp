#pragma once

#include "pstarmax/model.hpp"

#include <Eigen/Dense>

namespace pstarmax::detail {

/// Number of regressor columns besides the intercept block.
inline Index regressor_count(const ModelSpec& spec) {
  Index k = 0;
  for (const auto* v : {&spec.a, &spec.b, &spec.s})
    for (int o : *v) k += o + 1;
  return k;
}

/// Fills R (p x regressor_count) with [W(l) eta_{t-i} | W(l) z_{t-j} | W(l) X_{k,t}] in packing order.
/// `eta(i)`, `z(j)` and `x(k)` return the lagged intensity (lambda or nu), the lagged observation
/// term (y or log(y+1)) and the covariate column; `x` may return nullptr for a zero covariate.
template <class Eta, class Z, class X>
void fill_regressors(const ModelSpec& spec, const WeightMatrixSet& w, Eta&& eta, Z&& z, X&& x,
                     Eigen::MatrixXd& r) {
  Index c = 0;
  for (int i = 1; i <= spec.q(); ++i) {
    const auto& v = eta(i);
    for (int l = 0; l <= spec.a[static_cast<std::size_t>(i - 1)]; ++l) w[l].apply(v, r.col(c++));
  }
  for (int j = 1; j <= spec.r(); ++j) {
    const auto& v = z(j);
    for (int l = 0; l <= spec.b[static_cast<std::size_t>(j - 1)]; ++l) w[l].apply(v, r.col(c++));
  }
  for (int k = 0; k < spec.m(); ++k) {
    const Eigen::VectorXd* v = x(k);
    for (int l = 0; l <= spec.s[static_cast<std::size_t>(k)]; ++l) {
      if (v == nullptr) {
        r.col(c++).setZero();
      } else {
        w[l].apply(*v, r.col(c++));
      }
    }
  }
}

/// eta = delta + R theta_rest. Every caller goes through here so intensities agree bit for bit.
inline void linear_predictor(const Eigen::VectorXd& theta, Index n_delta, const Eigen::MatrixXd& r,
                             Eigen::VectorXd& eta) {
  eta.noalias() = r * theta.tail(theta.size() - n_delta);
  if (n_delta == 1) {
    eta.array() += theta[0];
  } else {
    eta += theta.head(n_delta);
  }
}

}  // namespace pstarmax::detail
