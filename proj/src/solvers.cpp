#include "gamblet/solvers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "gamblet/error.hpp"

namespace gamblet {

namespace {

std::atomic<int> g_threads{1};

}  // namespace

CgResult cg_solve(const LinearOperator& apply, std::span<const double> b, const CgOptions& opts,
                  std::span<const double> inv_diagonal) {
  if (!(opts.tol > 0.0)) throw ContractError("cg_solve: tol must be positive");
  const std::size_t n = b.size();
  if (!inv_diagonal.empty() && inv_diagonal.size() != n)
    throw ContractError("cg_solve: preconditioner length mismatch");
  CgResult res;
  res.x.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  Vector r(b.begin(), b.end());
  Vector z(n);
  auto precondition = [&] {
    if (inv_diagonal.empty()) {
      z = r;
    } else {
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diagonal[i] * r[i];
    }
  };
  precondition();
  Vector p = z;
  Vector mp(n);
  double rz = dot(r, z);
  double rnorm = bnorm;
  for (Index it = 1; it <= opts.max_iters; ++it) {
    apply(p, mp);
    const double pmp = dot(p, mp);
    if (!std::isfinite(pmp)) throw BreakdownError(it, "non-finite curvature");
    if (pmp <= 0.0) throw BreakdownError(it, "non-positive curvature p^T M p = " + std::to_string(pmp));
    const double alpha = rz / pmp;
    axpy(alpha, p, res.x);
    axpy(-alpha, mp, r);
    rnorm = norm2(r);
    if (!std::isfinite(rnorm)) throw BreakdownError(it, "non-finite residual");
    res.iters = it;
    if (rnorm <= opts.tol * bnorm) {
      res.residual = rnorm / bnorm;
      res.converged = true;
      return res;
    }
    precondition();
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  res.residual = rnorm / bnorm;
  return res;
}

CgResult cg_solve(const SparseMatrix& m, std::span<const double> b, const CgOptions& opts) {
  if (m.rows() != m.cols() || m.cols() != static_cast<Index>(b.size()))
    throw ContractError("cg_solve: matrix " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + " vs rhs " + std::to_string(b.size()));
  Vector inv_diag;
  if (opts.jacobi) {
    inv_diag = m.diagonal();
    for (double& d : inv_diag) {
      if (!(d > 0.0)) throw ContractError("cg_solve: Jacobi needs a positive diagonal");
      d = 1.0 / d;
    }
  }
  const auto off = m.row_offsets();
  const auto col = m.col_indices();
  const auto val = m.values();
  LinearOperator apply = [&](std::span<const double> x, std::span<double> y) {
    for (Index i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (Index p = off[i]; p < off[i + 1]; ++p) s += val[p] * x[col[p]];
      y[i] = s;
    }
  };
  return cg_solve(apply, b, opts, inv_diag);
}

Eigen::LLT<DenseMatrix> cholesky(const DenseMatrix& m) {
  if (m.rows() != m.cols()) throw ContractError("cholesky: matrix must be square");
  Eigen::LLT<DenseMatrix> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  // Locate the failing pivot with an unblocked left-looking pass.
  const Index n = m.rows();
  DenseMatrix l = DenseMatrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) throw NotSpdError(j, d);
    l(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < n; ++i)
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  throw NotSpdError(n - 1, 0.0);
}

DenseMatrix dense_solve(const DenseMatrix& m, const DenseMatrix& b) {
  if (m.rows() != b.rows()) throw ContractError("dense_solve: row mismatch");
  return cholesky(m).solve(b);
}

SpdSolver::SpdSolver(SparseMatrix m, const SolverPolicy& policy, Index expected_rhs)
    : m_(std::move(m)), cg_(policy.cg) {
  if (m_.rows() != m_.cols()) throw ContractError("SpdSolver: matrix must be square");
  const double n = static_cast<double>(m_.rows());
  bool dense = m_.rows() <= policy.dense_threshold;
  if (!dense && m_.rows() <= policy.dense_cap) {
    // Flop model: factorization plus triangular solves vs CG at ~60 iterations.
    const double rhs = static_cast<double>(std::max<Index>(expected_rhs, 1));
    const double factor_cost = n * n * n / 3.0 + 2.0 * n * n * rhs;
    const double cg_cost = rhs * 60.0 * (2.0 * static_cast<double>(m_.nnz()) + 10.0 * n);
    dense = factor_cost < cg_cost;
  }
  if (dense) factor_ = cholesky(m_.to_dense());
}

Vector SpdSolver::solve(std::span<const double> b, int level) const {
  if (static_cast<Index>(b.size()) != m_.rows()) throw ContractError("SpdSolver: rhs length mismatch");
  if (factor_) return to_vector(factor_->solve(to_eigen(b)));
  CgResult r = cg_solve(m_, b, cg_);
  if (!r.converged) throw SolveError(level, r.residual, "CG did not converge");
  return std::move(r.x);
}

DenseMatrix SpdSolver::solve(const DenseMatrix& b, int level) const {
  if (b.rows() != m_.rows()) throw ContractError("SpdSolver: rhs rows mismatch");
  if (factor_) return factor_->solve(b);
  DenseMatrix x(b.rows(), b.cols());
  parallel_for(b.cols(), [&](Index j) {
    Vector col(b.col(j).data(), b.col(j).data() + b.rows());
    CgResult r = cg_solve(m_, col, cg_);
    if (!r.converged) throw SolveError(level, r.residual, "CG did not converge");
    x.col(j) = to_eigen(r.x);
  });
  return x;
}

void set_thread_count(int n) { g_threads = std::max(1, n); }
int thread_count() { return g_threads; }

void parallel_for(Index n, const std::function<void(Index)>& body) {
  const int workers = static_cast<int>(std::min<Index>(thread_count(), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::mutex err_mutex;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace gamblet
