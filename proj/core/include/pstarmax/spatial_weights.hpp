#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <string>
#include <string_view>
#include <vector>

namespace pstarmax {

using Index = Eigen::Index;

/// One finding of a validation pass. `matrix` and `row` are -1 when not applicable.
struct Issue {
  std::string code;
  std::string message;
  int matrix = -1;
  Index row = -1;
  bool error = true;
};

class ValidationReport {
 public:
  void add_error(std::string code, std::string message, int matrix = -1, Index row = -1);
  void add_warning(std::string code, std::string message, int matrix = -1, Index row = -1);
  void merge(const ValidationReport& other);

  /// True when no issue of error severity was recorded. Warnings do not count.
  [[nodiscard]] bool ok() const noexcept;
  [[nodiscard]] bool has(std::string_view code) const noexcept;
  [[nodiscard]] const std::vector<Issue>& issues() const noexcept { return issues_; }

 private:
  std::vector<Issue> issues_;
};

/// A p x p spatial weight matrix. Storage is chosen at construction (identity,
/// dense, or row-major sparse below 25% density); every accessor has dense semantics.
class WeightMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  static WeightMatrix identity(Index p);
  static WeightMatrix from_dense(const Eigen::MatrixXd& m);
  static WeightMatrix from_triplets(Index p, const std::vector<Eigen::Triplet<double>>& entries);

  [[nodiscard]] Index size() const noexcept { return p_; }
  [[nodiscard]] bool is_identity() const noexcept { return storage_ == Storage::identity; }
  [[nodiscard]] bool is_sparse() const noexcept { return storage_ == Storage::sparse; }
  [[nodiscard]] Index nonzeros() const;
  [[nodiscard]] Eigen::MatrixXd dense() const;

  /// out = W * x for x with p rows.
  void apply(const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Ref<Eigen::MatrixXd> out) const;
  /// out += scale * W * x.
  void apply_add(double scale, const Eigen::Ref<const Eigen::MatrixXd>& x,
                 Eigen::Ref<Eigen::MatrixXd> out) const;
  [[nodiscard]] Eigen::VectorXd operator*(const Eigen::VectorXd& x) const;

  /// Visits every structurally nonzero entry as f(row, col, value), row-major.
  template <class F>
  void for_each_nonzero(F&& f) const {
    switch (storage_) {
      case Storage::identity:
        for (Index i = 0; i < p_; ++i) f(i, i, 1.0);
        break;
      case Storage::dense:
        for (Index i = 0; i < p_; ++i)
          for (Index j = 0; j < p_; ++j)
            if (dense_(i, j) != 0.0) f(i, j, dense_(i, j));
        break;
      case Storage::sparse:
        for (Index i = 0; i < sparse_.outerSize(); ++i)
          for (Sparse::InnerIterator it(sparse_, i); it; ++it) f(i, it.col(), it.value());
        break;
    }
  }

 private:
  enum class Storage { identity, dense, sparse };

  Index p_ = 0;
  Storage storage_ = Storage::identity;
  Eigen::MatrixXd dense_;
  Sparse sparse_;
};

/// Ordered set [W(0), ..., W(lmax)] of p x p weight matrices. Construction only
/// checks shapes; `validate` checks the modelling invariants.
class WeightMatrixSet {
 public:
  WeightMatrixSet() = default;
  explicit WeightMatrixSet(std::vector<WeightMatrix> matrices);

  [[nodiscard]] Index p() const noexcept { return p_; }
  [[nodiscard]] int max_order() const noexcept { return static_cast<int>(matrices_.size()) - 1; }
  [[nodiscard]] std::size_t size() const noexcept { return matrices_.size(); }
  [[nodiscard]] const WeightMatrix& operator[](int order) const { return matrices_.at(order); }
  [[nodiscard]] const std::vector<WeightMatrix>& matrices() const noexcept { return matrices_; }

  /// Conjugates every matrix by the permutation `perm` (new index i holds old index perm[i]).
  [[nodiscard]] WeightMatrixSet permuted(const std::vector<Index>& perm) const;

 private:
  Index p_ = 0;
  std::vector<WeightMatrix> matrices_;
};

/// Square n x n lattice, locations numbered column-wise from the top-left corner.
struct GridSpec {
  int n = 0;
  [[nodiscard]] Index p() const noexcept { return static_cast<Index>(n) * n; }
  /// 0-based location index of (row, col), row 0 at the top.
  [[nodiscard]] Index location(int row, int col) const noexcept {
    return static_cast<Index>(col) * n + row;
  }
};

/// Symmetric order-1 neighbourhood structure, 0-based.
struct AdjacencyList {
  std::vector<std::vector<Index>> neighbors;
  [[nodiscard]] Index p() const noexcept { return static_cast<Index>(neighbors.size()); }
};

/// [I, W_4NN]: equal weights over the axis-adjacent neighbours.
WeightMatrixSet build_grid_4nn(GridSpec grid);
/// [I, W_NS, W_WE]: north/south and west/east neighbours in separate matrices.
WeightMatrixSet build_grid_directional(GridSpec grid);
/// Equal-weight matrices for neighbourhood orders 1..max_order (max_order in {1, 2}).
/// Locations without order-2 neighbours get an all-zero row, which `validate` flags.
WeightMatrixSet from_adjacency(const AdjacencyList& adj, int max_order);

/// Order-l neighbour sets derived from order-1 adjacency (l = 1 or 2).
std::vector<std::vector<Index>> neighbor_sets(const AdjacencyList& adj, int order);

struct WeightValidationOptions {
  bool allow_empty_rows = false;
  double row_sum_tolerance = 1e-12;
  double rank_relative_tolerance = 1e-10;
};

ValidationReport validate(const WeightMatrixSet& set, const WeightValidationOptions& options = {});

/// tau = max over l of the column-sum norm ||W(l)||_1.
double column_sum_norm_tau(const WeightMatrixSet& set);

}  // namespace pstarmax
