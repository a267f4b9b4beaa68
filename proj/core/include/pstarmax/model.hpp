#pragma once

#include "pstarmax/spatial_weights.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pstarmax {

enum class Link { linear, log_linear };
enum class InterceptKind { homogeneous, inhomogeneous };

std::string_view to_string(Link link) noexcept;
std::string_view to_string(InterceptKind kind) noexcept;
Link parse_link(std::string_view s);
InterceptKind parse_intercept(std::string_view s);

/// Orders of a PSTARMAX(q_{a_1..a_q}, r_{b_1..b_r}, m_{s_1..s_m}) model.
struct ModelSpec {
  Link link = Link::linear;
  InterceptKind intercept = InterceptKind::homogeneous;
  std::vector<int> a;  ///< spatial order per feedback lag i = 1..q
  std::vector<int> b;  ///< spatial order per observation lag j = 1..r
  std::vector<int> s;  ///< spatial order per covariate k = 1..m

  [[nodiscard]] int q() const noexcept { return static_cast<int>(a.size()); }
  [[nodiscard]] int r() const noexcept { return static_cast<int>(b.size()); }
  [[nodiscard]] int m() const noexcept { return static_cast<int>(s.size()); }
  [[nodiscard]] int max_spatial_order() const noexcept;
  /// First time index whose intensity follows the recursion; earlier ones are initialised.
  [[nodiscard]] int first_time() const noexcept;
  [[nodiscard]] Index intercept_size(Index p) const noexcept {
    return intercept == InterceptKind::homogeneous ? 1 : p;
  }
  [[nodiscard]] Index parameter_count(Index p) const noexcept;

  /// Throws on negative orders, r = 0 without covariates, or orders above W's lmax.
  void check(const WeightMatrixSet& w) const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Offsets of each block inside the packed parameter vector
/// (delta, then alpha by (i, l), beta by (j, l), gamma by (k, l)).
class ParameterLayout {
 public:
  ParameterLayout(const ModelSpec& spec, Index p);

  [[nodiscard]] Index size() const noexcept { return size_; }
  [[nodiscard]] Index intercept_size() const noexcept { return n_delta_; }
  [[nodiscard]] Index alpha(int lag, int order) const { return alpha_.at(lag - 1) + order; }
  [[nodiscard]] Index beta(int lag, int order) const { return beta_.at(lag - 1) + order; }
  [[nodiscard]] Index gamma(int k, int order) const { return gamma_.at(k - 1) + order; }
  /// Indices of all alpha and beta entries, the block the stationarity constraint covers.
  [[nodiscard]] std::vector<Index> dynamic_indices() const;
  [[nodiscard]] std::vector<std::string> names() const;

 private:
  Index n_delta_ = 0;
  Index size_ = 0;
  std::vector<Index> alpha_, beta_, gamma_;
  std::vector<int> a_, b_, s_;
};

/// Structured parameter vector. `delta` has length 1 (homogeneous) or p.
struct ParameterVector {
  Eigen::VectorXd delta;
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> beta;
  std::vector<std::vector<double>> gamma;

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;
};

Eigen::VectorXd pack(const ParameterVector& theta);
ParameterVector unpack(const Eigen::VectorXd& flat, const ModelSpec& spec, Index p);
/// Checks that the structure of `theta` matches `spec` for p locations.
void check_shape(const ParameterVector& theta, const ModelSpec& spec, Index p);

/// Observed counts Y_{i,t}, i = 0..p-1, t = 0..T, stored p x (T+1).
class CountPanel {
 public:
  CountPanel() = default;
  explicit CountPanel(Eigen::MatrixXd counts);

  [[nodiscard]] Index p() const noexcept { return y_.rows(); }
  [[nodiscard]] Index T() const noexcept { return y_.cols() - 1; }
  [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return y_; }
  [[nodiscard]] double operator()(Index i, Index t) const { return y_(i, t); }
  /// Columns [first, last] as a new panel (time relabelled from 0).
  [[nodiscard]] CountPanel slice(Index first, Index last) const;
  /// 64-bit FNV-1a hash of the dimensions and all counts, hex encoded.
  [[nodiscard]] std::string fingerprint() const;

 private:
  Eigen::MatrixXd y_;
};

/// m covariate processes, each p x (T+1).
class CovariatePanel {
 public:
  CovariatePanel() = default;
  explicit CovariatePanel(std::vector<Eigen::MatrixXd> processes);

  [[nodiscard]] int m() const noexcept { return static_cast<int>(x_.size()); }
  [[nodiscard]] bool empty() const noexcept { return x_.empty(); }
  [[nodiscard]] Index p() const noexcept { return x_.empty() ? 0 : x_.front().rows(); }
  [[nodiscard]] Index T() const noexcept { return x_.empty() ? -1 : x_.front().cols() - 1; }
  [[nodiscard]] const Eigen::MatrixXd& process(int k) const { return x_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] bool nonnegative() const;
  [[nodiscard]] CovariatePanel slice(Index first, Index last) const;

 private:
  std::vector<Eigen::MatrixXd> x_;
};

struct CoefficientMatrices {
  std::vector<Eigen::MatrixXd> A;  ///< A_i = sum_l alpha_il W(l)
  std::vector<Eigen::MatrixXd> B;  ///< B_j = sum_l beta_jl W(l)
};

CoefficientMatrices coefficient_matrices(const ParameterVector& theta, const ModelSpec& spec,
                                         const WeightMatrixSet& w);

enum class StationarityCriterion { coefficient_sum, tau_adjusted };
std::string_view to_string(StationarityCriterion c) noexcept;
StationarityCriterion parse_criterion(std::string_view s);

/// Bound minus sum_{i,l} |alpha_il| + sum_{j,l} |beta_jl|; the bound is 1 for the
/// coefficient-sum criterion and 1/sqrt(tau) for the tau-adjusted one. Positive means satisfied.
double stationarity_margin(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                           StationarityCriterion criterion);
/// Spectral norm of sum_i (|A_i| + |B_i|); values below 1 satisfy the (sufficient) spectral condition.
double spectral_stationarity_norm(const ParameterVector& theta, const ModelSpec& spec,
                                  const WeightMatrixSet& w);

/// Identifiability pre-flight: observation lags present, spatially / temporally constant
/// covariates, and numerical rank of the observed design matrix when data are supplied.
ValidationReport check_identifiability(const ModelSpec& spec, const WeightMatrixSet& w,
                                       const CovariatePanel* x = nullptr, const CountPanel* y = nullptr);

/// Stationary mean (I - sum A_i - sum B_j)^{-1} (delta + gamma_bar) of a linear model.
Eigen::VectorXd stationary_mean(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                                const std::optional<Eigen::VectorXd>& mean_covariate_term = std::nullopt);

/// Autocovariance Gamma(h) of Y for a first-order linear model. `sigma` defaults to
/// diag(stationary_mean), the conditionally independent case.
Eigen::MatrixXd autocovariance(const ParameterVector& theta, const ModelSpec& spec, const WeightMatrixSet& w,
                               int lag, const std::optional<Eigen::MatrixXd>& sigma = std::nullopt);

}  // namespace pstarmax
