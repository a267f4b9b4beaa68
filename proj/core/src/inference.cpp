#include "pstarmax/inference.hpp"

#include "pstarmax/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace pstarmax {

double chi2_upper_tail(double x, int df) {
  require(df >= 1, ErrorKind::precondition, "chi-square degrees of freedom must be positive");
  require(!std::isnan(x), ErrorKind::numerical, "chi-square statistic is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

WaldResult wald_test(const FitResult& fit, const Eigen::MatrixXd& C, const Eigen::VectorXd& c0) {
  const Index k = fit.theta.size();
  require(C.cols() == k, ErrorKind::precondition,
          "contrast matrix has " + std::to_string(C.cols()) + " columns, expected " + std::to_string(k));
  require(C.rows() >= 1 && c0.size() == C.rows(), ErrorKind::precondition, "c0 must have one entry per row of C");
  Eigen::FullPivLU<Eigen::MatrixXd> rank_lu(C);
  const Index f = rank_lu.rank();
  require(f == C.rows(), ErrorKind::precondition, "contrast matrix rows are linearly dependent");
  const Eigen::MatrixXd v = C * fit.covariance * C.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
  require(lu.isInvertible(), ErrorKind::numerical, "C Sigma C' is singular");
  const Eigen::VectorXd diff = C * fit.theta - c0;
  WaldResult out;
  out.statistic = std::max(0.0, diff.dot(lu.solve(diff)));
  out.df = static_cast<int>(f);
  out.p_value = chi2_upper_tail(out.statistic, out.df);
  return out;
}

WaldResult single_param_test(const FitResult& fit, Index k) {
  require(k >= 0 && k < fit.theta.size(), ErrorKind::precondition, "parameter index out of range");
  const double var = fit.covariance(k, k);
  require(var > 0.0 && std::isfinite(var), ErrorKind::numerical, "variance of the tested parameter is not positive");
  WaldResult out;
  out.statistic = fit.theta[k] * fit.theta[k] / var;
  out.df = 1;
  const double tail = chi2_upper_tail(out.statistic, 1);
  if (fit.spec.link == Link::linear) {
    out.p_value = 0.5 * tail;
    out.boundary_adjusted = true;
  } else {
    out.p_value = tail;
  }
  return out;
}

WaldResult boundary_test(const FitResult& fit, const std::vector<Index>& indices) {
  require(!indices.empty(), ErrorKind::precondition, "no parameters to test");
  if (indices.size() == 1) return single_param_test(fit, indices.front());
  if (fit.spec.link == Link::linear)
    fail(ErrorKind::unsupported,
         "unsupported: chi-bar-squared reference for joint tests of several parameters on the boundary");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Index>(indices.size()), fit.theta.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] >= 0 && indices[r] < fit.theta.size(), ErrorKind::precondition,
            "parameter index out of range");
    c(static_cast<Index>(r), indices[r]) = 1.0;
  }
  return wald_test(fit, c, Eigen::VectorXd::Zero(c.rows()));
}

double qic(double loglik, const Eigen::MatrixXd& H, const Eigen::MatrixXd& G) {
  require(H.rows() == H.cols() && G.rows() == H.rows() && G.cols() == H.cols(), ErrorKind::precondition,
          "H and G must be square and of equal size");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  require(lu.isInvertible(), ErrorKind::numerical, "H is singular");
  return -2.0 * loglik + 2.0 * lu.solve(G).trace();
}

double qic(const FitResult& fit) { return qic(fit.loglik, fit.H, fit.G); }

std::vector<RankedModel> compare_models(const std::vector<FitResult>& fits) {
  std::vector<RankedModel> ranked;
  ranked.reserve(fits.size());
  for (std::size_t i = 0; i < fits.size(); ++i) {
    require(fits[i].fingerprint == fits.front().fingerprint, ErrorKind::validation,
            "fits were computed on different datasets");
    ranked.push_back({i, fits[i].qic, fits[i].theta.size()});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedModel& a, const RankedModel& b) {
    if (std::abs(a.qic - b.qic) >= 1e-9) return a.qic < b.qic;
    return a.parameters < b.parameters;
  });
  return ranked;
}

}  // namespace pstarmax
