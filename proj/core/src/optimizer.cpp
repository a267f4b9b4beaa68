#include "optimizer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pstarmax::detail {

namespace {

double soft(double v, double mu) {
  if (v > mu) return v - mu;
  if (v < -mu) return v + mu;
  return 0.0;
}

double qp_value(const Eigen::MatrixXd& B, const Eigen::VectorXd& g, const Eigen::VectorXd& center,
                const Eigen::VectorXd& x) {
  const Eigen::VectorXd u = x - center;
  return 0.5 * u.dot(B * u) + g.dot(u);
}

// Equality-constrained solve on the active set of `x`: variables at a bound stay there, and when
// the sum constraint is tight the free summed variables keep it tight (zeros in the set stay zero).
bool polish(const Eigen::MatrixXd& B, const Eigen::VectorXd& g, const Eigen::VectorXd& center,
            const Constraints& c, const Eigen::VectorXd& x, Eigen::VectorXd& out) {
  const Index k = x.size();
  std::vector<char> in_sum(static_cast<std::size_t>(k), 0);
  for (Index i : c.sum_set) in_sum[static_cast<std::size_t>(i)] = 1;
  const bool sum_tight =
      !c.sum_set.empty() && c.sum_abs(x) >= c.sum_bound - 1e-12 * std::max(1.0, c.sum_bound);

  std::vector<Index> free;
  for (Index i = 0; i < k; ++i) {
    const bool at_bound = x[i] <= c.lower[i] || x[i] >= c.upper[i];
    const bool pinned_zero = sum_tight && in_sum[static_cast<std::size_t>(i)] && x[i] == 0.0;
    if (!at_bound && !pinned_zero) free.push_back(i);
  }
  if (free.empty()) return false;

  std::vector<Index> free_sum;
  double fixed_sum = 0.0;
  for (Index i : c.sum_set) {
    if (std::find(free.begin(), free.end(), i) != free.end()) {
      free_sum.push_back(i);
    } else {
      fixed_sum += std::abs(x[i]);
    }
  }
  const bool with_row = sum_tight && !free_sum.empty();
  const Index nf = static_cast<Index>(free.size());
  const Index n = nf + (with_row ? 1 : 0);
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs(n);
  // Gradient of the model at x: g + B (x - center). Solve for the step on the free block.
  const Eigen::VectorXd grad = g + B * (x - center);
  for (Index a = 0; a < nf; ++a) {
    for (Index b = 0; b < nf; ++b) kkt(a, b) = B(free[a], free[b]);
    rhs[a] = -grad[free[a]];
  }
  if (with_row) {
    double current = 0.0;
    for (Index i : free_sum) current += std::abs(x[i]);
    for (Index a = 0; a < nf; ++a) {
      const Index i = free[a];
      if (std::find(free_sum.begin(), free_sum.end(), i) == free_sum.end()) continue;
      const double sgn = x[i] > 0.0 ? 1.0 : -1.0;
      kkt(a, nf) = sgn;
      kkt(nf, a) = sgn;
    }
    rhs[nf] = (c.sum_bound - fixed_sum) - current;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return false;
  const Eigen::VectorXd step = lu.solve(rhs);
  if (!step.allFinite()) return false;
  out = x;
  for (Index a = 0; a < nf; ++a) out[free[a]] += step[a];
  // Sign changes inside the summed block invalidate the linearised constraint.
  for (Index i : free_sum)
    if ((out[i] > 0.0) != (x[i] > 0.0) && out[i] != 0.0) return false;
  out = c.project(out);
  return true;
}

}  // namespace

double Constraints::sum_abs(const Eigen::VectorXd& x) const {
  double s = 0.0;
  for (Index i : sum_set) s += std::abs(x[i]);
  return s;
}

bool Constraints::feasible(const Eigen::VectorXd& x, double tol) const {
  for (Index i = 0; i < x.size(); ++i)
    if (!(x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)) return false;
  return sum_set.empty() || sum_abs(x) <= sum_bound + tol;
}

Eigen::VectorXd Constraints::project(const Eigen::VectorXd& v) const {
  return project_scaled(v, Eigen::VectorXd::Ones(v.size()));
}

Eigen::VectorXd Constraints::project_scaled(const Eigen::VectorXd& v, const Eigen::VectorXd& scale) const {
  Eigen::VectorXd x = v.cwiseMax(lower).cwiseMin(upper);
  if (sum_set.empty() || sum_abs(x) <= sum_bound) return x;
  // x_k(mu) = clamp(soft(v_k, mu / scale_k^2)); sum_k |x_k(mu)| is nonincreasing in mu.
  auto at = [&](double mu, Eigen::VectorXd& out) {
    for (Index i : sum_set) {
      const double w = 1.0 / (scale[i] * scale[i]);
      out[i] = std::clamp(soft(v[i], mu * w), lower[i], upper[i]);
    }
    return sum_abs(out);
  };
  double lo = 0.0;
  double hi = 0.0;
  for (Index i : sum_set) hi = std::max(hi, std::abs(v[i]) * scale[i] * scale[i]);
  for (int it = 0; it < 200 && hi > lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (at(mid, x) > sum_bound) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  at(hi, x);
  return x;
}

Eigen::VectorXd solve_qp(const Eigen::MatrixXd& B, const Eigen::VectorXd& g, const Eigen::VectorXd& center,
                         const Constraints& c) {
  const Index k = g.size();
  // Interior Newton step first; most iterations never touch a constraint.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(B);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const Eigen::VectorXd newton = center - ldlt.solve(g);
    if (newton.allFinite() && c.feasible(newton)) return newton;
  }

  // Accelerated projected gradient in Jacobi-scaled coordinates, with adaptive restart.
  Eigen::VectorXd scale(k);
  const double floor = 1e-12 * std::max(1.0, B.diagonal().cwiseAbs().maxCoeff());
  for (Index i = 0; i < k; ++i) scale[i] = std::sqrt(std::max(B(i, i), floor));
  const Eigen::VectorXd inv2 = scale.cwiseInverse().cwiseAbs2();
  const Eigen::MatrixXd scaled = scale.cwiseInverse().asDiagonal() * B * scale.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
  const double lip = std::max(eig.eigenvalues().maxCoeff(), 1e-300);

  Eigen::VectorXd x = c.project(center);
  Eigen::VectorXd z = x;
  Eigen::VectorXd next(k);
  double t = 1.0;
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd grad = g + B * (z - center);
    next = c.project_scaled(z - (inv2.cwiseProduct(grad)) / lip, scale);
    const Eigen::VectorXd delta = next - x;
    const double change = (scale.cwiseProduct(delta)).lpNorm<Eigen::Infinity>();
    if ((scale.cwiseProduct(z - next)).dot(scale.cwiseProduct(delta)) > 0.0) t = 1.0;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * delta;
    x = next;
    t = t_next;
    if (change <= 1e-15 * (1.0 + (scale.cwiseProduct(x)).lpNorm<Eigen::Infinity>())) break;
  }

  Eigen::VectorXd best = x;
  double best_value = qp_value(B, g, center, x);
  Eigen::VectorXd candidate;
  for (int round = 0; round < 3; ++round) {
    if (!polish(B, g, center, c, best, candidate)) break;
    const double v = qp_value(B, g, center, candidate);
    if (!(v < best_value)) break;
    best = candidate;
    best_value = v;
  }
  return best;
}

OptimizerResult minimize(const Objective& obj, const Constraints& c, const Eigen::VectorXd& x0,
                         const OptimizerOptions& options) {
  OptimizerResult res;
  Eigen::VectorXd x = c.project(x0);
  LocalModel m;
  const double eps = std::numeric_limits<double>::epsilon();
  for (res.iterations = 0; res.iterations <= options.max_iterations; ++res.iterations) {
    if (!obj.model(x, m) || !std::isfinite(m.f) || !m.g.allFinite()) {
      res.message = "objective is not finite at the current iterate";
      break;
    }
    res.f = m.f;
    res.projected_gradient = (c.project(x - m.g) - x).lpNorm<Eigen::Infinity>();
    if (res.projected_gradient <= options.gradient_tolerance) {
      res.converged = true;
      break;
    }
    if (res.iterations == options.max_iterations) {
      res.message = "iteration limit reached";
      break;
    }
    const Index k = x.size();
    Eigen::MatrixXd b = m.B;
    const double ridge = 1e-10 * std::max(b.trace() / static_cast<double>(k), 1e-12);
    b.diagonal().array() += ridge;
    Eigen::VectorXd d = solve_qp(b, m.g, x, c) - x;
    double slope = m.g.dot(d);
    if (!(slope < 0.0)) {
      d = c.project(x - m.g) - x;
      slope = m.g.dot(d);
    }
    const double noise = 10.0 * eps * std::abs(m.f);
    double step = 1.0;
    // Once the predicted decrease is below rounding noise, f cannot rank steps; use the
    // directional derivative at the full step and take the secant minimiser along d.
    if (-slope < 100.0 * noise) {
      LocalModel full;
      if (obj.model(c.project(x + d), full) && full.g.allFinite()) {
        const double slope1 = full.g.dot(d);
        if (slope1 > 0.0) step = std::clamp(slope / (slope - slope1), 1e-3, 1.0);
      }
    }
    bool accepted = false;
    Eigen::VectorXd trial;
    for (int bt = 0; bt < 60; ++bt) {
      trial = x + step * d;
      const double f = obj.value(trial);
      if (std::isfinite(f) && f <= m.f + 1e-4 * step * slope + noise) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.message = "line search failed";
      break;
    }
    trial = c.project(trial);
    if (trial == x) {
      res.message = "no further progress possible";
      break;
    }
    x = trial;
  }
  res.x = x;
  return res;
}

}  // namespace pstarmax::detail
