#pragma once

// Test problem generators: bilinear FEM for -div(a grad u) on the unit
// square with the multiscale coefficient, right-hand sides, graph Laplacians.
//
// Grid conventions: 2^q x 2^q interior nodes, h = 1/(2^q + 1). Node (i, j),
// 1 <= i, j <= 2^q, sits at z = (i h, j h) and has row-major index
// (j - 1) 2^q + (i - 1). Cells are indexed by their lower-left node (i, j),
// 0 <= i, j <= 2^q; the cell field is stored row-major over (i, j) as well.

#include <array>
#include <utility>
#include <vector>

#include "gamblet/hierarchy.hpp"
#include "gamblet/sparse.hpp"

namespace gamblet {

struct CoefficientOptions {
  int factors = 7;
  double amplitude = 0.2;
};

/// a(i, j) = prod_{k=1}^{factors} (1 + amp cos(2^k pi (i + j) / (2^q + 1)))
///                                 (1 + amp sin(2^k pi (j - 3i) / (2^q + 1))).
double multiscale_coefficient(int q, Index i, Index j, const CoefficientOptions& opts = {});

/// Cell field of size (2^q + 1)^2.
std::vector<double> multiscale_field(int q, const CoefficientOptions& opts = {});

struct GridProblem {
  int q = 0;
  Index side = 0;  // 2^q
  double h = 0.0;
  std::vector<double> coeff;
  SparseMatrix A;

  Index size() const noexcept { return side * side; }
  /// Row-major index of interior node (i, j), 1-based coordinates.
  Index node_index(Index i, Index j) const { return (j - 1) * side + (i - 1); }
  std::array<double, 2> node(Index n) const {
    return {static_cast<double>(n % side + 1) * h, static_cast<double>(n / side + 1) * h};
  }
  double coeff_min() const;
  double coeff_max() const;
};

/// Q1 stiffness matrix with homogeneous Dirichlet rows and columns removed.
/// Throws ContractError for a non-positive or non-finite cell value.
GridProblem assemble_fem(int q, std::vector<double> cell_field);
GridProblem assemble_fem(int q, const CoefficientOptions& opts = {});

/// Quadtree over the interior nodes, leaves relabeled to row-major order.
IndexTree fem_tree(int q);
HierarchyOperators fem_operators(int q);

/// cos(3 z1 + z2) + sin(3 z2) + sin(7 z1 - 5 z2)
double smooth_source(double z1, double z2);
Vector rhs_smooth(const GridProblem& prob);
/// Row-major index of the centre node: axis index 2^(q-1) (0-based) on both axes.
Index dirac_index(int q);
/// 4^q at the centre node, zero elsewhere.
Vector rhs_dirac(const GridProblem& prob);

struct Edge {
  Index a;
  Index b;
  double weight = 1.0;
};

/// L_ii = sum_j w_ij + reg, L_ij = -w_ij. Repeated edges accumulate.
/// Throws ContractError on self-loops, non-positive weights or reg < 0.
SparseMatrix graph_laplacian(Index n, const std::vector<Edge>& edges, double reg);

/// 2D grid graph (side x side) with unit weights, row-major numbering.
std::vector<Edge> grid_graph_edges(Index side);

/// Tree for an arbitrary sparse pattern: repeated heavy-edge matching until at
/// most `coarse_size` aggregates remain. Leaves keep the matrix numbering.
IndexTree aggregation_tree(const SparseMatrix& a, Index coarse_size = 4);

}  // namespace gamblet
