#pragma once

// Row-compressed sparse matrices, dense helpers and the vector kernels shared
// by every other module.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gamblet {

using Index = std::ptrdiff_t;
using Vector = std::vector<double>;
using DenseMatrix = Eigen::MatrixXd;

/// Dense oracles refuse to run above this many rows.
inline constexpr Index kDenseCap = 4096;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Canonical CSR matrix: sorted, unique column indices in every row.
///
/// Instances are immutable once built. Duplicate triplets are summed at
/// construction; explicit zeros are kept so that pattern algebra stays exact.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(Index nrows, Index ncols);

  static SparseMatrix from_triplets(Index nrows, Index ncols, std::vector<Triplet> triplets);
  /// Takes ownership of raw CSR arrays; throws ContractError unless canonical.
  static SparseMatrix from_csr(Index nrows, Index ncols, std::vector<Index> row_offsets,
                               std::vector<Index> col_indices, std::vector<double> values);
  static SparseMatrix identity(Index n);
  /// Keeps entries with |x| > drop_tol (exact zeros are dropped by default).
  static SparseMatrix from_dense(const DenseMatrix& dense, double drop_tol = 0.0);

  Index rows() const noexcept { return nrows_; }
  Index cols() const noexcept { return ncols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_offsets() const noexcept { return offsets_; }
  std::span<const Index> col_indices() const noexcept { return cols_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const Index> row_cols(Index i) const;
  std::span<const double> row_values(Index i) const;

  /// Entry (i, j), zero when not stored.
  double coeff(Index i, Index j) const;
  double max_abs() const;
  Vector diagonal() const;

  DenseMatrix to_dense() const;
  SparseMatrix transpose() const;
  /// (M + M^T) / 2, with the symmetry flag set.
  SparseMatrix symmetrized() const;
  SparseMatrix scaled(double alpha) const;
  /// Copy with only the entries for which keep(i, j) is true.
  template <class Pred>
  SparseMatrix filtered(Pred keep) const;

  /// True when max|M_ij - M_ji| <= rel_tol * max|M|; checked by explicit transpose.
  bool is_symmetric(double rel_tol = 1e-12) const;
  /// Symmetry flag: set only after the check above succeeded.
  bool symmetric() const noexcept { return symmetric_; }
  /// Verifies symmetry and returns a flagged copy; throws ContractError otherwise.
  SparseMatrix with_symmetry_flag(double rel_tol = 1e-12) const;

 private:
  Index nrows_ = 0;
  Index ncols_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<Index> cols_;
  std::vector<double> values_;
  bool symmetric_ = false;
};

template <class Pred>
SparseMatrix SparseMatrix::filtered(Pred keep) const {
  std::vector<Index> offsets(static_cast<std::size_t>(nrows_) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(cols_.size());
  vals.reserve(values_.size());
  for (Index i = 0; i < nrows_; ++i) {
    for (Index p = offsets_[i]; p < offsets_[i + 1]; ++p) {
      if (keep(i, cols_[p])) {
        cols.push_back(cols_[p]);
        vals.push_back(values_[p]);
      }
    }
    offsets[i + 1] = static_cast<Index>(cols.size());
  }
  return from_csr(nrows_, ncols_, std::move(offsets), std::move(cols), std::move(vals));
}

// -- products ---------------------------------------------------------------

/// y = M x. Throws ContractError on dimension mismatch.
Vector spmv(const SparseMatrix& m, std::span<const double> x);
/// y = M^T x.
Vector spmv_transpose(const SparseMatrix& m, std::span<const double> x);
/// Sparse-sparse product with exact pattern algebra (Gustavson).
SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b);
/// alpha * A + beta * B on the union pattern.
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha = 1.0,
                 double beta = 1.0);
/// R M R^T.
SparseMatrix triple_product(const SparseMatrix& r, const SparseMatrix& m);
DenseMatrix multiply(const SparseMatrix& a, const DenseMatrix& b);
DenseMatrix multiply(const DenseMatrix& a, const SparseMatrix& b);

double max_abs_diff(const SparseMatrix& a, const SparseMatrix& b);

// -- vector helpers ---------------------------------------------------------

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
double max_abs(std::span<const double> x);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vector add(std::span<const double> x, std::span<const double> y, double alpha = 1.0,
           double beta = 1.0);
/// sqrt(x^T M x); M must be square and SPD for a meaningful value.
double energy_norm(const SparseMatrix& m, std::span<const double> x);
/// Throws ContractError naming `what` when x holds NaN or Inf.
void require_finite(std::span<const double> x, const char* what);

Vector to_vector(const Eigen::VectorXd& v);
Eigen::VectorXd to_eigen(std::span<const double> x);

}  // namespace gamblet
