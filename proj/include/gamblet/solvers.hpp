#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>

#include "gamblet/sparse.hpp"

namespace gamblet {

struct CgOptions {
  /// Stop once ||b - Mx|| <= tol * ||b||.
  double tol = 1e-12;
  Index max_iters = 20000;
  bool jacobi = false;
};

struct CgResult {
  Vector x;
  Index iters = 0;
  /// Final relative residual ||b - Mx|| / ||b||.
  double residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients on an SPD matrix. Never throws for slow convergence:
/// the result carries `converged = false` instead. Non-finite iterates or
/// non-positive curvature raise BreakdownError.
CgResult cg_solve(const SparseMatrix& m, std::span<const double> b, const CgOptions& opts = {});

/// Matrix-free variant; `apply(x, y)` must write y = M x.
using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;
CgResult cg_solve(const LinearOperator& apply, std::span<const double> b,
                  const CgOptions& opts = {}, std::span<const double> inv_diagonal = {});

/// M^{-1} B for SPD M via Cholesky. Throws NotSpdError with the failing pivot.
DenseMatrix dense_solve(const DenseMatrix& m, const DenseMatrix& b);

/// Cholesky factor L (lower) of an SPD matrix; NotSpdError names the pivot.
Eigen::LLT<DenseMatrix> cholesky(const DenseMatrix& m);

struct SolverPolicy {
  /// Systems at or below this size always use a dense factorization.
  Index dense_threshold = 512;
  /// Above dense_threshold a factorization is still used, up to this size, when
  /// its cost model beats CG for the expected number of right-hand sides.
  Index dense_cap = kDenseCap;
  CgOptions cg{};
};

/// SPD solve backend for one matrix: dense Cholesky or CG, picked at
/// construction. Const operations are safe to call concurrently.
class SpdSolver {
 public:
  SpdSolver(SparseMatrix m, const SolverPolicy& policy, Index expected_rhs = 1);

  bool is_dense() const noexcept { return factor_.has_value(); }
  Index size() const noexcept { return m_.rows(); }
  const SparseMatrix& matrix() const noexcept { return m_; }

  /// Throws SolveError(level) when CG misses its tolerance.
  Vector solve(std::span<const double> b, int level = 0) const;
  DenseMatrix solve(const DenseMatrix& b, int level = 0) const;

 private:
  SparseMatrix m_;
  CgOptions cg_;
  std::optional<Eigen::LLT<DenseMatrix>> factor_;
};

/// Number of worker threads used by data-parallel loops (default 1).
void set_thread_count(int n);
int thread_count();
/// Runs body(i) for i in [0, n) across thread_count() workers.
void parallel_for(Index n, const std::function<void(Index)>& body);

}  // namespace gamblet
