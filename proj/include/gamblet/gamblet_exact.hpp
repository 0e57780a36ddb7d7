#pragma once

// Exact gamblet transform and solve.
//
// All per-level containers are indexed by level k = 1..q (index 0 unused).

#include <filesystem>
#include <memory>
#include <vector>

#include "gamblet/hierarchy.hpp"
#include "gamblet/solvers.hpp"
#include "gamblet/sparse.hpp"

namespace gamblet {

struct TransformOptions {
  /// Backend for the B^(k) and A^(1) solves.
  SolverPolicy solver{};
  /// Keep Psi^(k), Chi^(k) and N^(k). Solves never need them.
  bool store_basis = true;
};

struct GambletHierarchy {
  int q = 0;
  std::vector<SparseMatrix> A;      // A^(k), k = 1..q
  std::vector<SparseMatrix> B;      // B^(k), k = 2..q
  std::vector<SparseMatrix> R;      // R^(k-1,k), k = 2..q
  std::vector<SparseMatrix> N;      // N^(k), k = 2..q (store_basis)
  std::vector<SparseMatrix> Psi;    // Psi^(k), k = 1..q (store_basis)
  std::vector<SparseMatrix> Chi;    // Chi^(k), k = 2..q (store_basis)
  std::vector<SparseMatrix> pibar;  // pibar^(k,k+1), k = 1..q-1
  /// solver[1] factors A^(1); solver[k] (k >= 2) factors B^(k).
  std::vector<std::shared_ptr<const SpdSolver>> solver;
  bool has_basis = false;
  bool localized = false;

  Index level_size(int k) const { return A.at(static_cast<std::size_t>(k)).rows(); }
  /// Psi^(k)^T x = R^(q,q-1) ... R^(k+1,k) x: maps level-k coefficients to R^N.
  Vector prolong(int k, std::span<const double> x) const;
  /// R^(k,k+1) ... R^(q-1,q) b.
  Vector restrict_to(int k, std::span<const double> b) const;
};

struct SubbandSolution {
  int q = 0;
  std::vector<Vector> v;  // v^(k) in R^N
  std::vector<Vector> w;  // w^(k) coefficients
  std::vector<Vector> b;  // b^(k) measurements
  Vector u;
};

/// Hierarchical computation of gamblets (levels q down to 2).
/// Throws StructureError when ops do not match A; SolveError names the level.
GambletHierarchy gamblet_transform(const SparseMatrix& a, const HierarchyOperators& ops,
                                   const TransformOptions& opts = {});

/// Subband solves B^(k) w^(k) = W^(k) b^(k), then u = sum_k v^(k).
SubbandSolution gamblet_solve(const GambletHierarchy& h, const HierarchyOperators& ops,
                              std::span<const double> b);

/// Subband decomposition of u (measurements b = A u).
SubbandSolution decompose(const GambletHierarchy& h, const HierarchyOperators& ops, const SparseMatrix& a,
                          std::span<const double> u);

/// sum_k v^(k).
Vector reconstruct(const SubbandSolution& s);

/// R^(q,k) A^(k)^{-1} R^(k,q) b.
Vector compressed_inverse_apply(const GambletHierarchy& h, int k, std::span<const double> b,
                                const SolverPolicy& policy = {});

/// Theta = Phi A^{-1} Phi^T. Throws RankError when Theta is singular.
DenseMatrix theta_matrix(const DenseMatrix& a, const DenseMatrix& phi);
/// psi_i = A^{-1} Phi^T Theta^{-1} e_i.
Vector gamblet_oracle(const DenseMatrix& a, const DenseMatrix& phi, Index i);
/// All gamblets at once, one per row.
DenseMatrix gamblet_oracle_all(const DenseMatrix& a, const DenseMatrix& phi);

/// A_k.mtx, B_k.mtx, R_k.mtx, Psi_k.mtx (when stored) and manifest.json.
void export_hierarchy(const std::filesystem::path& dir, const GambletHierarchy& h, const std::string& tag = "");

}  // namespace gamblet
