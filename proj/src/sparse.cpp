#include "gamblet/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gamblet/error.hpp"

namespace gamblet {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

// Sparse accumulator used by the Gustavson kernels.
class RowAccumulator {
 public:
  explicit RowAccumulator(Index ncols)
      : values_(static_cast<std::size_t>(ncols), 0.0),
        mark_(static_cast<std::size_t>(ncols), -1) {}

  void add(Index row, Index col, double v) {
    if (mark_[col] != row) {
      mark_[col] = row;
      values_[col] = v;
      touched_.push_back(col);
    } else {
      values_[col] += v;
    }
  }

  // Appends the accumulated row in column order and resets the touched slots.
  void flush(Index row, std::vector<Index>& cols, std::vector<double>& vals) {
    const auto ncols = static_cast<Index>(values_.size());
    const auto count = static_cast<Index>(touched_.size());
    if (count * 8 > ncols) {
      // Dense-ish row: a linear sweep is cheaper than sorting.
      for (Index c = 0; c < ncols; ++c) {
        if (mark_[c] == row) {
          cols.push_back(c);
          vals.push_back(values_[c]);
        }
      }
    } else {
      std::sort(touched_.begin(), touched_.end());
      for (Index c : touched_) {
        cols.push_back(c);
        vals.push_back(values_[c]);
      }
    }
    touched_.clear();
  }

 private:
  std::vector<double> values_;
  std::vector<Index> mark_;
  std::vector<Index> touched_;
};

}  // namespace

SparseMatrix::SparseMatrix(Index nrows, Index ncols)
    : nrows_(nrows), ncols_(ncols), offsets_(static_cast<std::size_t>(nrows) + 1, 0) {
  require(nrows >= 0 && ncols >= 0, "negative matrix dimension");
}

SparseMatrix SparseMatrix::from_triplets(Index nrows, Index ncols, std::vector<Triplet> triplets) {
  require(nrows >= 0 && ncols >= 0, "negative matrix dimension");
  for (const auto& t : triplets) {
    require(t.row >= 0 && t.row < nrows && t.col >= 0 && t.col < ncols,
            "triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                ") outside " + dims(nrows, ncols));
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Index> offsets(static_cast<std::size_t>(nrows) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(triplets.size());
  vals.reserve(triplets.size());
  Index last_row = -1;
  Index last_col = -1;
  for (const auto& t : triplets) {
    if (t.row == last_row && t.col == last_col) {
      vals.back() += t.value;
      continue;
    }
    cols.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[t.row + 1];
    last_row = t.row;
    last_col = t.col;
  }
  for (Index i = 0; i < nrows; ++i) offsets[i + 1] += offsets[i];
  SparseMatrix m;
  m.nrows_ = nrows;
  m.ncols_ = ncols;
  m.offsets_ = std::move(offsets);
  m.cols_ = std::move(cols);
  m.values_ = std::move(vals);
  return m;
}

SparseMatrix SparseMatrix::from_csr(Index nrows, Index ncols, std::vector<Index> row_offsets,
                                    std::vector<Index> col_indices, std::vector<double> values) {
  require(nrows >= 0 && ncols >= 0, "negative matrix dimension");
  require(static_cast<Index>(row_offsets.size()) == nrows + 1, "row_offsets must have nrows+1 entries");
  require(row_offsets.front() == 0, "row_offsets must start at 0");
  require(col_indices.size() == values.size(), "col_indices and values differ in length");
  require(row_offsets.back() == static_cast<Index>(values.size()), "row_offsets end != nnz");
  for (Index i = 0; i < nrows; ++i) {
    require(row_offsets[i] <= row_offsets[i + 1], "row_offsets must be nondecreasing");
    for (Index p = row_offsets[i]; p < row_offsets[i + 1]; ++p) {
      require(col_indices[p] >= 0 && col_indices[p] < ncols, "column index out of range");
      require(p == row_offsets[i] || col_indices[p - 1] < col_indices[p],
              "columns must be strictly increasing within row " + std::to_string(i));
    }
  }
  SparseMatrix m;
  m.nrows_ = nrows;
  m.ncols_ = ncols;
  m.offsets_ = std::move(row_offsets);
  m.cols_ = std::move(col_indices);
  m.values_ = std::move(values);
  return m;
}

SparseMatrix SparseMatrix::identity(Index n) {
  std::vector<Index> offsets(static_cast<std::size_t>(n) + 1);
  std::vector<Index> cols(static_cast<std::size_t>(n));
  for (Index i = 0; i <= n; ++i) offsets[i] = i;
  for (Index i = 0; i < n; ++i) cols[i] = i;
  auto m = from_csr(n, n, std::move(offsets), std::move(cols), Vector(static_cast<std::size_t>(n), 1.0));
  m.symmetric_ = true;
  return m;
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& dense, double drop_tol) {
  const Index r = dense.rows();
  const Index c = dense.cols();
  std::vector<Index> offsets(static_cast<std::size_t>(r) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) {
      const double v = dense(i, j);
      if (std::abs(v) > drop_tol) {
        cols.push_back(j);
        vals.push_back(v);
      }
    }
    offsets[i + 1] = static_cast<Index>(cols.size());
  }
  return from_csr(r, c, std::move(offsets), std::move(cols), std::move(vals));
}

std::span<const Index> SparseMatrix::row_cols(Index i) const {
  return std::span<const Index>(cols_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::span<const double> SparseMatrix::row_values(Index i) const {
  return std::span<const double>(values_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

double SparseMatrix::coeff(Index i, Index j) const {
  require(i >= 0 && i < nrows_ && j >= 0 && j < ncols_, "coeff index out of range");
  auto c = row_cols(i);
  auto it = std::lower_bound(c.begin(), c.end(), j);
  if (it == c.end() || *it != j) return 0.0;
  return values_[offsets_[i] + (it - c.begin())];
}

double SparseMatrix::max_abs() const { return gamblet::max_abs(values_); }

Vector SparseMatrix::diagonal() const {
  Vector d(static_cast<std::size_t>(std::min(nrows_, ncols_)), 0.0);
  for (Index i = 0; i < static_cast<Index>(d.size()); ++i) d[i] = coeff(i, i);
  return d;
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d = DenseMatrix::Zero(nrows_, ncols_);
  for (Index i = 0; i < nrows_; ++i)
    for (Index p = offsets_[i]; p < offsets_[i + 1]; ++p) d(i, cols_[p]) = values_[p];
  return d;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Index> offsets(static_cast<std::size_t>(ncols_) + 1, 0);
  for (Index c : cols_) ++offsets[c + 1];
  for (Index j = 0; j < ncols_; ++j) offsets[j + 1] += offsets[j];
  std::vector<Index> cols(cols_.size());
  std::vector<double> vals(values_.size());
  std::vector<Index> next(offsets.begin(), offsets.end() - 1);
  for (Index i = 0; i < nrows_; ++i) {
    for (Index p = offsets_[i]; p < offsets_[i + 1]; ++p) {
      const Index q = next[cols_[p]]++;
      cols[q] = i;
      vals[q] = values_[p];
    }
  }
  SparseMatrix t;
  t.nrows_ = ncols_;
  t.ncols_ = nrows_;
  t.offsets_ = std::move(offsets);
  t.cols_ = std::move(cols);
  t.values_ = std::move(vals);
  t.symmetric_ = symmetric_;
  return t;
}

SparseMatrix SparseMatrix::symmetrized() const {
  require(nrows_ == ncols_, "symmetrized() needs a square matrix, got " + dims(nrows_, ncols_));
  SparseMatrix s = add(*this, transpose(), 0.5, 0.5);
  s.symmetric_ = true;
  return s;
}

SparseMatrix SparseMatrix::scaled(double alpha) const {
  SparseMatrix s = *this;
  for (double& v : s.values_) v *= alpha;
  return s;
}

bool SparseMatrix::is_symmetric(double rel_tol) const {
  if (nrows_ != ncols_) return false;
  const double scale = max_abs();
  if (scale == 0.0) return true;
  return max_abs_diff(*this, transpose()) <= rel_tol * scale;
}

SparseMatrix SparseMatrix::with_symmetry_flag(double rel_tol) const {
  if (!is_symmetric(rel_tol)) throw ContractError("matrix is not symmetric");
  SparseMatrix s = *this;
  s.symmetric_ = true;
  return s;
}

Vector spmv(const SparseMatrix& m, std::span<const double> x) {
  require(m.cols() == static_cast<Index>(x.size()),
          "spmv: matrix " + dims(m.rows(), m.cols()) + " vs vector " + std::to_string(x.size()));
  Vector y(static_cast<std::size_t>(m.rows()), 0.0);
  const auto off = m.row_offsets();
  const auto col = m.col_indices();
  const auto val = m.values();
  for (Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Index p = off[i]; p < off[i + 1]; ++p) s += val[p] * x[col[p]];
    y[i] = s;
  }
  return y;
}

Vector spmv_transpose(const SparseMatrix& m, std::span<const double> x) {
  require(m.rows() == static_cast<Index>(x.size()),
          "spmv_transpose: matrix " + dims(m.rows(), m.cols()) + " vs vector " +
              std::to_string(x.size()));
  Vector y(static_cast<std::size_t>(m.cols()), 0.0);
  const auto off = m.row_offsets();
  const auto col = m.col_indices();
  const auto val = m.values();
  for (Index i = 0; i < m.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (Index p = off[i]; p < off[i + 1]; ++p) y[col[p]] += val[p] * xi;
  }
  return y;
}

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  require(a.cols() == b.rows(),
          "multiply: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
  RowAccumulator acc(b.cols());
  std::vector<Index> offsets(static_cast<std::size_t>(a.rows()) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  const auto aoff = a.row_offsets();
  const auto acol = a.col_indices();
  const auto aval = a.values();
  const auto boff = b.row_offsets();
  const auto bcol = b.col_indices();
  const auto bval = b.values();
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index p = aoff[i]; p < aoff[i + 1]; ++p) {
      const Index k = acol[p];
      const double av = aval[p];
      for (Index q = boff[k]; q < boff[k + 1]; ++q) acc.add(i, bcol[q], av * bval[q]);
    }
    acc.flush(i, cols, vals);
    offsets[i + 1] = static_cast<Index>(cols.size());
  }
  return SparseMatrix::from_csr(a.rows(), b.cols(), std::move(offsets), std::move(cols),
                                std::move(vals));
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha, double beta) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "add: " + dims(a.rows(), a.cols()) + " vs " + dims(b.rows(), b.cols()));
  std::vector<Index> offsets(static_cast<std::size_t>(a.rows()) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
  vals.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
  for (Index i = 0; i < a.rows(); ++i) {
    auto ac = a.row_cols(i);
    auto av = a.row_values(i);
    auto bc = b.row_cols(i);
    auto bv = b.row_values(i);
    std::size_t p = 0;
    std::size_t q = 0;
    while (p < ac.size() || q < bc.size()) {
      if (q == bc.size() || (p < ac.size() && ac[p] < bc[q])) {
        cols.push_back(ac[p]);
        vals.push_back(alpha * av[p]);
        ++p;
      } else if (p == ac.size() || bc[q] < ac[p]) {
        cols.push_back(bc[q]);
        vals.push_back(beta * bv[q]);
        ++q;
      } else {
        cols.push_back(ac[p]);
        vals.push_back(alpha * av[p] + beta * bv[q]);
        ++p;
        ++q;
      }
    }
    offsets[i + 1] = static_cast<Index>(cols.size());
  }
  return SparseMatrix::from_csr(a.rows(), a.cols(), std::move(offsets), std::move(cols),
                                std::move(vals));
}

SparseMatrix triple_product(const SparseMatrix& r, const SparseMatrix& m) {
  return multiply(multiply(r, m), r.transpose());
}

DenseMatrix multiply(const SparseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(),
          "multiply: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
  // Work on transposes so that every update touches a contiguous column.
  const DenseMatrix bt = b.transpose();
  DenseMatrix ct = DenseMatrix::Zero(b.cols(), a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    auto cols = a.row_cols(i);
    auto vals = a.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) ct.col(i).noalias() += vals[p] * bt.col(cols[p]);
  }
  return ct.transpose();
}

DenseMatrix multiply(const DenseMatrix& a, const SparseMatrix& b) {
  require(a.cols() == b.rows(),
          "multiply: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
  DenseMatrix c = DenseMatrix::Zero(a.rows(), b.cols());
  for (Index k = 0; k < b.rows(); ++k) {
    auto cols = b.row_cols(k);
    auto vals = b.row_values(k);
    for (std::size_t p = 0; p < cols.size(); ++p) c.col(cols[p]).noalias() += vals[p] * a.col(k);
  }
  return c;
}

double max_abs_diff(const SparseMatrix& a, const SparseMatrix& b) {
  return add(a, b, 1.0, -1.0).max_abs();
}

double dot(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double max_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector add(std::span<const double> x, std::span<const double> y, double alpha, double beta) {
  require(x.size() == y.size(), "add: length mismatch");
  Vector z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = alpha * x[i] + beta * y[i];
  return z;
}

double energy_norm(const SparseMatrix& m, std::span<const double> x) {
  return std::sqrt(std::max(0.0, dot(x, spmv(m, x))));
}

void require_finite(std::span<const double> x, const char* what) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]))
      throw ContractError(std::string(what) + ": non-finite entry at " + std::to_string(i));
  }
}

Vector to_vector(const Eigen::VectorXd& v) { return Vector(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_eigen(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Index>(x.size()));
}

}  // namespace gamblet
