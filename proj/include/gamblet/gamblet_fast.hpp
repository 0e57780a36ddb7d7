#pragma once

// Fast gamblet transform: level graph distances, localized inverse,
// truncation, radius schedule and the localized solve.

#include <limits>
#include <vector>

#include "gamblet/gamblet_exact.hpp"
#include "gamblet/hierarchy.hpp"
#include "gamblet/sparse.hpp"

namespace gamblet {

/// Scratch space for ball queries; one per thread.
struct BallWorkspace {
  std::vector<Index> dist;
  std::vector<Index> touched;
};

/// Shortest-path distance on I^(k) through the aggregated pattern of A:
/// C_ij = 1 iff A_st != 0 for some s, t with s^(k) = i and t^(k) = j.
class LevelGraphDistance {
 public:
  static constexpr Index kInfinity = std::numeric_limits<Index>::max();

  LevelGraphDistance() = default;
  LevelGraphDistance(const SparseMatrix& a, const IndexTree& tree, int k);

  int level() const noexcept { return level_; }
  Index size() const noexcept { return conn_.rows(); }
  /// 0/1 connectivity pattern (diagonal included when some A_ss != 0).
  const SparseMatrix& connectivity() const noexcept { return conn_; }

  /// Labels j with d(i, j) <= rho, sorted ascending.
  std::vector<Index> ball(Index i, Index rho) const;
  std::vector<Index> ball(Index i, Index rho, BallWorkspace& ws) const;
  /// BFS distances from i (kInfinity when unreachable).
  std::vector<Index> distances_from(Index i) const;
  Index distance(Index i, Index j) const;
  /// Largest finite distance; exact all-pairs BFS up to 4096 labels,
  /// otherwise twice the largest eccentricity of one root per component.
  Index diameter_bound() const;

 private:
  int level_ = 0;
  SparseMatrix conn_;
};

/// Least-squares slope of log |ball(i, rho)| against log rho over a few centres.
double ball_growth_exponent(const LevelGraphDistance& dist, Index max_radius = 6);

struct LocalizationSchedule {
  double H = 0.5;
  double epsilon = 1e-3;
  double C_a = 1.0;
  /// Geometric dimension d entering the ball-solve accuracy.
  double d = 2.0;
  std::vector<Index> rho;           // rho_k, k = 1..q
  std::vector<double> subband_tol;  // eps / (2 k^2), k = 2..q
  double coarse_tol = 5e-4;         // eps / 2
  std::vector<double> ball_tol;     // C_a^{-1} H^(3 - k + k d / 2) eps / k^2, k = 2..q

  int depth() const noexcept { return static_cast<int>(rho.size()) - 1; }
};

/// rho_k = ceil(C_a ((1 + 1/ln(1/H)) k ln(1/H) + ln(1/eps))) with the matching tolerances.
LocalizationSchedule default_schedule(double H, int q, double epsilon, double C_a, double d = 2.0);
/// Same tolerances, every radius replaced by `rho`.
LocalizationSchedule uniform_schedule(double H, int q, double epsilon, double C_a, Index rho, double d = 2.0);

/// Inv_rho(B_loc, Z): column i of the result solves B_loc[J_i, J_i] y = Z[J_i, i],
/// J_i = wavelets whose cell lies within distance rho of i at level k-1.
/// `wavelet_cell[j]` is the level-(k-1) cell of wavelet j. Ball systems above
/// `dense_limit` unknowns use CG with relative tolerance `tol`.
SparseMatrix localized_inverse(const SparseMatrix& b_loc, const SparseMatrix& z, const LevelGraphDistance& dist,
                               std::span<const Index> wavelet_cell, Index rho, double tol,
                               Index dense_limit = 512);

/// Keeps M_ij when d(parent(i), parent(j)) <= 2 rho, then returns (M + M^T)/2.
/// `parent` maps rows of M to labels of `dist`; empty means the identity.
SparseMatrix truncate(const SparseMatrix& m, const LevelGraphDistance& dist, std::span<const Index> parent,
                      Index rho);

struct FastLevelStats {
  int level = 0;
  Index size = 0;
  Index nnz_A = 0;
  Index nnz_B = 0;
  Index nnz_R = 0;
  Index rho_inv = 0;
  Index rho_trun = -1;
  bool dense_solver = false;
};

struct FastResult {
  SubbandSolution solution;
  GambletHierarchy hierarchy;
  std::vector<FastLevelStats> stats;
  double transform_seconds = 0.0;
  double solve_seconds = 0.0;

  Index total_nnz() const;
};

/// Localized hierarchy per the fast algorithm (A^(k),loc, B^(k),loc, R^(k-1,k),loc).
GambletHierarchy fast_gamblet_transform(const SparseMatrix& a, const HierarchyOperators& ops,
                                        const LocalizationSchedule& sched, const SolverPolicy& policy = {},
                                        std::vector<FastLevelStats>* stats = nullptr);

FastResult fast_gamblet_solve(const SparseMatrix& a, const HierarchyOperators& ops, std::span<const double> g,
                              const LocalizationSchedule& sched, const SolverPolicy& policy = {});

}  // namespace gamblet
