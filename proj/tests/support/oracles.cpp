#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pstarmax::testing {

namespace {

// Counts, for each position in visiting order, the earlier-visited points with smaller rank.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  long long below(std::size_t i) const {
    long long s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<long long> tree_;
};

}  // namespace

TauEstimate kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<std::size_t> by_x(n), by_y(n), rank_y(n);
  std::iota(by_x.begin(), by_x.end(), 0);
  std::iota(by_y.begin(), by_y.end(), 0);
  std::sort(by_x.begin(), by_x.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::sort(by_y.begin(), by_y.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  for (std::size_t r = 0; r < n; ++r) rank_y[by_y[r]] = r;

  // Concordant partners of i: smaller in both coordinates plus larger in both.
  std::vector<long long> concordant(n, 0);
  Fenwick forward(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = by_x[k];
    const long long lower_left = forward.below(rank_y[i]);
    const long long upper_right = static_cast<long long>(n - 1 - rank_y[i]) - (static_cast<long long>(k) - lower_left);
    concordant[i] = lower_left + upper_right;
    forward.add(rank_y[i]);
  }
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(concordant[i]);
    h[i] = (2.0 * c - static_cast<double>(n - 1)) / static_cast<double>(n - 1);
  }
  const double mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  return {mean, 2.0 * std::sqrt(var / static_cast<double>(n))};
}

double frank_tau(double theta) {
  const double debye = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                           [](double t) { return t == 0.0 ? 1.0 : t / std::expm1(t); }, 0.0, theta) /
                       theta;
  return 1.0 - 4.0 * (1.0 - debye) / theta;
}

GofResult poisson_gof(const std::vector<double>& counts, double lambda) {
  const double n = static_cast<double>(counts.size());
  const boost::math::poisson_distribution<double> dist(lambda);
  int top = 0;
  for (double c : counts) top = std::max(top, static_cast<int>(c));
  std::vector<double> observed(static_cast<std::size_t>(top) + 1, 0.0);
  for (double c : counts) observed[static_cast<std::size_t>(c)] += 1.0;

  // Cells [lo, hi] with expected counts at least 5; the rest is pooled into both tails.
  int lo = 0;
  while (n * boost::math::cdf(dist, lo) < 5.0) ++lo;
  int hi = lo;
  while (n * boost::math::cdf(boost::math::complement(dist, hi)) >= 5.0) ++hi;
  std::vector<double> obs_cells, exp_cells;
  double left = 0.0;
  for (int k = 0; k <= std::min(lo, top); ++k) left += observed[static_cast<std::size_t>(k)];
  obs_cells.push_back(left);
  exp_cells.push_back(n * boost::math::cdf(dist, lo));
  for (int k = lo + 1; k < hi; ++k) {
    obs_cells.push_back(k <= top ? observed[static_cast<std::size_t>(k)] : 0.0);
    exp_cells.push_back(n * boost::math::pdf(dist, k));
  }
  double right = 0.0;
  for (int k = hi; k <= top; ++k) right += observed[static_cast<std::size_t>(k)];
  obs_cells.push_back(right);
  exp_cells.push_back(n * boost::math::cdf(boost::math::complement(dist, hi - 1)));

  GofResult r;
  for (std::size_t c = 0; c < obs_cells.size(); ++c) {
    const double d = obs_cells[c] - exp_cells[c];
    r.statistic += d * d / exp_cells[c];
  }
  r.df = static_cast<int>(obs_cells.size()) - 1;
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(r.df), r.statistic));
  return r;
}

double poisson_mean_abs_deviation(double lambda) {
  double sum = 0.0;
  double pmf = std::exp(-lambda);
  for (int k = 0; k < 1000; ++k) {
    sum += std::abs(k - lambda) * pmf;
    pmf *= lambda / (k + 1);
  }
  return sum;
}

Eigen::VectorXd finite_difference_score(const QuasiLikelihood& ql, const Eigen::VectorXd& theta) {
  Eigen::VectorXd g(theta.size());
  for (Index k = 0; k < theta.size(); ++k) {
    const double h = 1e-6 * (1.0 + std::abs(theta[k]));
    Eigen::VectorXd up = theta, down = theta;
    up[k] += h;
    down[k] -= h;
    g[k] = (ql.value(up) - ql.value(down)) / (2.0 * h);
  }
  return g;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  double worst = 0.0;
  for (Index k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a[k] - b[k]) / std::max(std::abs(b[k]), floor));
  return worst;
}

Eigen::MatrixXd stein_gamma0(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd M = A + B;
  const Eigen::MatrixXd Q = B * S * B.transpose();
  Eigen::MatrixXd X = Q;
  for (int it = 0; it < 100000; ++it) {
    const Eigen::MatrixXd next = M * X * M.transpose() + Q;
    const double change = (next - X).cwiseAbs().maxCoeff();
    X = next;
    if (change < 1e-15 * (1.0 + X.cwiseAbs().maxCoeff())) break;
  }
  return X + S;
}

Eigen::VectorXd sample_autocovariance(const Eigen::MatrixXd& y, Index lag) {
  const Index n = y.cols();
  const Eigen::VectorXd mean = y.rowwise().mean();
  const Eigen::MatrixXd c = y.colwise() - mean;
  Eigen::VectorXd out(y.rows());
  for (Index i = 0; i < y.rows(); ++i)
    out[i] = c.row(i).tail(n - lag).dot(c.row(i).head(n - lag)) / static_cast<double>(n - lag);
  return out;
}

double arma11_rho1(double phi, double theta) {
  return (1.0 + phi * theta) * (phi + theta) / (1.0 + 2.0 * phi * theta + theta * theta);
}

double univariate_loglik(const std::vector<double>& y, double delta, double beta) {
  double ll = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double lambda = delta + beta * y[t - 1];
    ll += y[t] * std::log(lambda) - lambda;
  }
  return ll;
}

}  // namespace pstarmax::testing
