#include "pstarmax/spatial_weights.hpp"

#include "pstarmax/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace pstarmax {

namespace {

constexpr double kSparseDensityThreshold = 0.25;

std::string describe(const std::string& what, int matrix, Index row) {
  std::ostringstream os;
  os << what << " (matrix " << matrix;
  if (row >= 0) os << ", row " << row;
  os << ")";
  return os.str();
}

}  // namespace

void ValidationReport::add_error(std::string code, std::string message, int matrix, Index row) {
  issues_.push_back({std::move(code), std::move(message), matrix, row, true});
}

void ValidationReport::add_warning(std::string code, std::string message, int matrix, Index row) {
  issues_.push_back({std::move(code), std::move(message), matrix, row, false});
}

void ValidationReport::merge(const ValidationReport& other) {
  issues_.insert(issues_.end(), other.issues_.begin(), other.issues_.end());
}

bool ValidationReport::ok() const noexcept {
  return std::none_of(issues_.begin(), issues_.end(), [](const Issue& i) { return i.error; });
}

bool ValidationReport::has(std::string_view code) const noexcept {
  return std::any_of(issues_.begin(), issues_.end(), [&](const Issue& i) { return i.code == code; });
}

// ---------------------------------------------------------------------------

WeightMatrix WeightMatrix::identity(Index p) {
  require(p >= 1, ErrorKind::precondition, "weight matrix needs at least one location");
  WeightMatrix w;
  w.p_ = p;
  w.storage_ = Storage::identity;
  return w;
}

WeightMatrix WeightMatrix::from_dense(const Eigen::MatrixXd& m) {
  require(m.rows() == m.cols() && m.rows() >= 1, ErrorKind::precondition,
          "weight matrix must be square and non-empty");
  WeightMatrix w;
  w.p_ = m.rows();
  if (m.isIdentity(0.0)) {
    w.storage_ = Storage::identity;
    return w;
  }
  const auto nnz = (m.array() != 0.0).count();
  const double density = static_cast<double>(nnz) / static_cast<double>(m.size());
  if (density < kSparseDensityThreshold) {
    w.storage_ = Storage::sparse;
    w.sparse_ = m.sparseView(0.0, 0.0);
    w.sparse_.makeCompressed();
  } else {
    w.storage_ = Storage::dense;
    w.dense_ = m;
  }
  return w;
}

WeightMatrix WeightMatrix::from_triplets(Index p, const std::vector<Eigen::Triplet<double>>& entries) {
  require(p >= 1, ErrorKind::precondition, "weight matrix needs at least one location");
  for (const auto& e : entries) {
    require(e.row() >= 0 && e.row() < p && e.col() >= 0 && e.col() < p, ErrorKind::precondition,
            "weight entry index out of range");
  }
  Sparse s(p, p);
  s.setFromTriplets(entries.begin(), entries.end());
  s.prune(0.0, 0.0);
  const double density = static_cast<double>(s.nonZeros()) / static_cast<double>(p * p);
  if (density < kSparseDensityThreshold) {
    WeightMatrix w;
    w.p_ = p;
    bool is_eye = s.nonZeros() == p;
    for (Index i = 0; is_eye && i < p; ++i) is_eye = s.coeff(i, i) == 1.0;
    if (is_eye) {
      w.storage_ = Storage::identity;
      return w;
    }
    w.storage_ = Storage::sparse;
    w.sparse_ = std::move(s);
    w.sparse_.makeCompressed();
    return w;
  }
  return from_dense(Eigen::MatrixXd(s));
}

Index WeightMatrix::nonzeros() const {
  switch (storage_) {
    case Storage::identity: return p_;
    case Storage::dense: return (dense_.array() != 0.0).count();
    case Storage::sparse: return sparse_.nonZeros();
  }
  return 0;
}

Eigen::MatrixXd WeightMatrix::dense() const {
  switch (storage_) {
    case Storage::identity: return Eigen::MatrixXd::Identity(p_, p_);
    case Storage::dense: return dense_;
    case Storage::sparse: return Eigen::MatrixXd(sparse_);
  }
  return {};
}

void WeightMatrix::apply(const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Ref<Eigen::MatrixXd> out) const {
  switch (storage_) {
    case Storage::identity: out = x; break;
    case Storage::dense: out.noalias() = dense_ * x; break;
    case Storage::sparse: out.noalias() = sparse_ * x; break;
  }
}

void WeightMatrix::apply_add(double scale, const Eigen::Ref<const Eigen::MatrixXd>& x,
                             Eigen::Ref<Eigen::MatrixXd> out) const {
  if (scale == 0.0) return;
  switch (storage_) {
    case Storage::identity: out += scale * x; break;
    case Storage::dense: out.noalias() += scale * (dense_ * x); break;
    case Storage::sparse: out.noalias() += scale * (sparse_ * x); break;
  }
}

Eigen::VectorXd WeightMatrix::operator*(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(p_);
  apply(x, out);
  return out;
}

// ---------------------------------------------------------------------------

WeightMatrixSet::WeightMatrixSet(std::vector<WeightMatrix> matrices) : matrices_(std::move(matrices)) {
  require(!matrices_.empty(), ErrorKind::precondition, "weight matrix set is empty");
  p_ = matrices_.front().size();
  for (const auto& m : matrices_) {
    require(m.size() == p_, ErrorKind::precondition, "weight matrices differ in dimension");
  }
}

WeightMatrixSet WeightMatrixSet::permuted(const std::vector<Index>& perm) const {
  require(static_cast<Index>(perm.size()) == p_, ErrorKind::precondition, "permutation length mismatch");
  std::vector<Index> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = static_cast<Index>(i);
  std::vector<WeightMatrix> out;
  for (const auto& m : matrices_) {
    std::vector<Eigen::Triplet<double>> t;
    m.for_each_nonzero([&](Index i, Index j, double v) { t.emplace_back(inverse[i], inverse[j], v); });
    out.push_back(WeightMatrix::from_triplets(p_, t));
  }
  return WeightMatrixSet(std::move(out));
}

// ---------------------------------------------------------------------------

namespace {

void require_grid(GridSpec grid) {
  require(grid.n >= 2, ErrorKind::precondition, "grid side length must be at least 2");
}

// Row-normalised weights over the given per-location neighbour lists.
WeightMatrix equal_weights(Index p, const std::vector<std::vector<Index>>& sets) {
  std::vector<Eigen::Triplet<double>> t;
  for (Index i = 0; i < p; ++i) {
    const auto& s = sets[static_cast<std::size_t>(i)];
    const double w = s.empty() ? 0.0 : 1.0 / static_cast<double>(s.size());
    for (Index j : s) t.emplace_back(i, j, w);
  }
  return WeightMatrix::from_triplets(p, t);
}

std::vector<std::vector<Index>> grid_neighbors(GridSpec grid, bool north_south, bool west_east) {
  const int n = grid.n;
  std::vector<std::vector<Index>> sets(static_cast<std::size_t>(grid.p()));
  for (int col = 0; col < n; ++col) {
    for (int row = 0; row < n; ++row) {
      auto& s = sets[static_cast<std::size_t>(grid.location(row, col))];
      if (west_east && col > 0) s.push_back(grid.location(row, col - 1));
      if (north_south && row > 0) s.push_back(grid.location(row - 1, col));
      if (north_south && row + 1 < n) s.push_back(grid.location(row + 1, col));
      if (west_east && col + 1 < n) s.push_back(grid.location(row, col + 1));
    }
  }
  return sets;
}

}  // namespace

WeightMatrixSet build_grid_4nn(GridSpec grid) {
  require_grid(grid);
  return WeightMatrixSet({WeightMatrix::identity(grid.p()),
                          equal_weights(grid.p(), grid_neighbors(grid, true, true))});
}

WeightMatrixSet build_grid_directional(GridSpec grid) {
  require_grid(grid);
  return WeightMatrixSet({WeightMatrix::identity(grid.p()),
                          equal_weights(grid.p(), grid_neighbors(grid, true, false)),
                          equal_weights(grid.p(), grid_neighbors(grid, false, true))});
}

std::vector<std::vector<Index>> neighbor_sets(const AdjacencyList& adj, int order) {
  require(order == 1 || order == 2, ErrorKind::unsupported, "neighbourhood order must be 1 or 2");
  const Index p = adj.p();
  require(p >= 1, ErrorKind::precondition, "adjacency list is empty");
  std::vector<std::set<Index>> first(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    for (Index j : adj.neighbors[static_cast<std::size_t>(i)]) {
      require(j >= 0 && j < p, ErrorKind::validation, "neighbour index out of range");
      require(j != i, ErrorKind::validation, "location " + std::to_string(i) + " lists itself as neighbour");
      first[static_cast<std::size_t>(i)].insert(j);
    }
  }
  for (Index i = 0; i < p; ++i) {
    require(!first[static_cast<std::size_t>(i)].empty(), ErrorKind::validation,
            "location " + std::to_string(i) + " has no order-1 neighbours");
    for (Index j : first[static_cast<std::size_t>(i)]) {
      require(first[static_cast<std::size_t>(j)].count(i) == 1, ErrorKind::validation,
              "adjacency is not symmetric between " + std::to_string(i) + " and " + std::to_string(j));
    }
  }
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    const auto& n1 = first[static_cast<std::size_t>(i)];
    if (order == 1) {
      out[static_cast<std::size_t>(i)].assign(n1.begin(), n1.end());
      continue;
    }
    std::set<Index> n2;
    for (Index j : n1)
      for (Index k : first[static_cast<std::size_t>(j)])
        if (k != i && n1.count(k) == 0) n2.insert(k);
    out[static_cast<std::size_t>(i)].assign(n2.begin(), n2.end());
  }
  return out;
}

WeightMatrixSet from_adjacency(const AdjacencyList& adj, int max_order) {
  require(max_order == 1 || max_order == 2, ErrorKind::unsupported,
          "adjacency-derived weights support max_order 1 or 2");
  std::vector<WeightMatrix> ms{WeightMatrix::identity(adj.p())};
  for (int order = 1; order <= max_order; ++order) {
    ms.push_back(equal_weights(adj.p(), neighbor_sets(adj, order)));
  }
  return WeightMatrixSet(std::move(ms));
}

// ---------------------------------------------------------------------------

ValidationReport validate(const WeightMatrixSet& set, const WeightValidationOptions& options) {
  ValidationReport report;
  if (set.size() == 0) {
    report.add_error("empty_set", "weight matrix set is empty");
    return report;
  }
  const Index p = set.p();

  if (!set[0].is_identity() && !set[0].dense().isIdentity(0.0)) {
    report.add_error("w0_not_identity", "W(0) must be the identity matrix", 0);
  }

  for (int l = 0; l <= set.max_order(); ++l) {
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(p);
    Eigen::VectorXi row_nnz = Eigen::VectorXi::Zero(p);
    std::vector<Index> negative_rows;
    std::vector<Index> diagonal_rows;
    set[l].for_each_nonzero([&](Index i, Index j, double v) {
      row_sums(i) += v;
      row_nnz(i) += 1;
      if (v < 0.0 || !std::isfinite(v)) negative_rows.push_back(i);
      if (l > 0 && i == j) diagonal_rows.push_back(i);
    });
    for (Index i : negative_rows) {
      report.add_error("negative_entry", describe("negative or non-finite weight", l, i), l, i);
    }
    for (Index i : diagonal_rows) {
      report.add_error("nonzero_diagonal", describe("nonzero diagonal entry", l, i), l, i);
    }
    for (Index i = 0; i < p; ++i) {
      if (row_nnz(i) == 0) {
        const auto msg = describe("row has no neighbours (all-zero row)", l, i);
        if (options.allow_empty_rows) report.add_warning("empty_row", msg, l, i);
        else report.add_error("empty_row", msg, l, i);
      } else if (std::abs(row_sums(i) - 1.0) > options.row_sum_tolerance) {
        report.add_error("row_sum", describe("row does not sum to 1", l, i), l, i);
      }
    }
  }

  // Rank of the flattened matrices, restricted to the union of their supports.
  std::map<std::pair<Index, Index>, Index> support;
  for (int l = 0; l <= set.max_order(); ++l) {
    set[l].for_each_nonzero([&](Index i, Index j, double) { support.emplace(std::make_pair(i, j), 0); });
  }
  Index next = 0;
  for (auto& [key, idx] : support) idx = next++;
  const Index n_mat = static_cast<Index>(set.size());
  if (next < n_mat) {
    report.add_error("linear_dependence", "weight matrices are linearly dependent (support too small)");
  } else {
    Eigen::MatrixXd flat = Eigen::MatrixXd::Zero(next, n_mat);
    for (int l = 0; l <= set.max_order(); ++l) {
      set[l].for_each_nonzero([&](Index i, Index j, double v) { flat(support.at({i, j}), l) = v; });
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(flat);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    for (Index k = 0; k < sv.size(); ++k) {
      if (sv(k) <= options.rank_relative_tolerance * smax) {
        report.add_error("linear_dependence", "weight matrices are linearly dependent as vectors");
        break;
      }
    }
  }
  return report;
}

double column_sum_norm_tau(const WeightMatrixSet& set) {
  double tau = 0.0;
  for (const auto& m : set.matrices()) {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(m.size());
    m.for_each_nonzero([&](Index, Index j, double v) { col(j) += std::abs(v); });
    tau = std::max(tau, col.maxCoeff());
  }
  return tau;
}

}  // namespace pstarmax
