#pragma once

// Index trees and the nesting (pi) / wavelet (W) matrices that drive the
// gamblet transform.
//
// Levels are numbered 1..q as in the usual multiresolution convention. Labels
// at level k < q are ordered lexicographically on their tuples, so the
// children of a label form a contiguous range. Level-q labels are matrix row
// indices; a tree may relabel them (e.g. to a row-major grid ordering) while
// keeping the sibling order, so children lists at the leaf level are general
// index lists.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gamblet/sparse.hpp"

namespace gamblet {

struct GridGeometry {
  int dim = 1;
  int branch = 2;
};

struct CellBox {
  std::array<double, 3> lower{0.0, 0.0, 0.0};
  double side = 1.0;
};

class IndexTree {
 public:
  IndexTree() = default;

  /// parents[k] (k = 2..q) maps each level-k label to its level-(k-1) parent.
  /// Entries parents[0] and parents[1] are ignored. Every label at levels < q
  /// must have at least one child and levels < q must be in tuple order.
  static IndexTree from_parents(Index level_one_size, std::vector<std::vector<Index>> parents,
                                std::optional<GridGeometry> geometry = std::nullopt);

  int depth() const noexcept { return static_cast<int>(sizes_.size()) - 1; }
  Index size(int k) const;
  /// Parent (level k-1) of level-k label i.
  Index parent(int k, Index i) const;
  /// Ancestor at `level` (<= k) of level-k label i.
  Index ancestor(int k, Index i, int level) const;
  /// Ancestor at `level` of every level-k label.
  std::vector<Index> ancestors(int k, int level) const;
  /// Level-(k+1) labels below level-k label i, in sibling order.
  std::span<const Index> children(int k, Index i) const;
  /// Position of label i among its siblings; at level 1 the label itself.
  Index digit(int k, Index i) const;
  /// The k-tuple (i_1, ..., i_k) of label i.
  std::vector<Index> tuple(int k, Index i) const;

  /// New tree whose level-q label `old` becomes `new_index[old]`.
  IndexTree relabel_leaves(std::span<const Index> new_index) const;

  const std::optional<GridGeometry>& geometry() const noexcept { return geometry_; }
  /// Spatial cell of a label in [0,1]^dim; needs grid geometry.
  CellBox cell_box(int k, Index i) const;

  const std::vector<Index>& parents(int k) const;

 private:
  void check_level(int k) const;

  std::vector<Index> sizes_;                      // [1..q]
  std::vector<std::vector<Index>> parent_;        // [2..q]
  std::vector<std::vector<Index>> child_offsets_; // [1..q-1]
  std::vector<std::vector<Index>> child_list_;    // [1..q-1]
  std::vector<std::vector<Index>> digit_;         // [1..q]
  std::optional<GridGeometry> geometry_;
};

/// Regular tree over [0,1]^dim: every cell splits into branch^dim children,
/// |I^(k)| = branch^(k*dim). Throws CapacityError above 2^26 leaves.
IndexTree build_grid_tree(int dim, int q, int branch);

/// Nesting/wavelet matrices indexed by level (entries outside 1..q unused).
struct HierarchyOperators {
  IndexTree tree;
  /// pi[k] = pi^(k,k+1), |I^(k)| x |I^(k+1)|, k = 1..q-1.
  std::vector<SparseMatrix> pi;
  /// W[k] = W^(k), |J^(k)| x |I^(k)|, k = 2..q.
  std::vector<SparseMatrix> W;
  /// wavelet_cell[k][j]: the level-(k-1) label that J^(k) label j belongs to.
  std::vector<std::vector<Index>> wavelet_cell;
  bool orthonormal = false;
  bool cellular = false;

  int depth() const noexcept { return tree.depth(); }
  Index level_size(int k) const { return tree.size(k); }
  Index wavelet_size(int k) const { return W.at(static_cast<std::size_t>(k)).rows(); }
};

/// Cellular orthonormal nesting matrices: row i holds 1/sqrt(m) on its m children.
std::vector<SparseMatrix> build_haar_pi(const IndexTree& tree);

struct WaveletMatrices {
  std::vector<SparseMatrix> W;
  std::vector<std::vector<Index>> wavelet_cell;
};

/// Per cell, the m-1 trailing columns of the Householder reflector that maps
/// e_1 to the normalized cell row of pi. Throws StructureError when pi is not
/// cellular with respect to `tree`.
WaveletMatrices build_cellular_W(const IndexTree& tree, const std::vector<SparseMatrix>& pi);

/// Haar pi plus cellular W for `tree`.
HierarchyOperators make_haar_operators(IndexTree tree);

/// (pi pi^T)^{-1} pi. Returns pi itself when pi pi^T is the identity to 1e-14.
/// Throws RankError when pi pi^T is singular.
SparseMatrix pseudo_inverse_pi(const SparseMatrix& pi);

/// pi^(k,q) = pi^(k,k+1) ... pi^(q-1,q); identity for k = q.
SparseMatrix measurement_matrix(const HierarchyOperators& ops, int k);

struct LevelDeviation {
  int level = 0;
  double value = 0.0;
  Index row = -1;
};

struct ConstructionReport {
  std::vector<LevelDeviation> pi_orthonormality;   // max|pi pi^T - I| per k = 1..q-1
  std::vector<LevelDeviation> w_orthonormality;    // max|W W^T - J| per k = 2..q
  std::vector<LevelDeviation> w_pi_orthogonality;  // max|W pi^(k,k-1)| per k = 2..q
  std::vector<int> dimension_mismatches;           // k with |J^(k)| != |I^(k)| - |I^(k-1)|
  Index cellularity_violations = 0;

  double max_pi_deviation() const;
  double max_w_deviation() const;
  double max_w_pi() const;
};

ConstructionReport verify_constructions(const HierarchyOperators& ops);

/// Writes pi_k.mtx, W_k.mtx and hierarchy.json (level sizes, flags, tree).
void save_operators(const std::filesystem::path& dir, const HierarchyOperators& ops);
HierarchyOperators load_operators(const std::filesystem::path& dir);

}  // namespace gamblet
