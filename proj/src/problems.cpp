#include "gamblet/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gamblet/error.hpp"

namespace gamblet {

double multiscale_coefficient(int q, Index i, Index j, const CoefficientOptions& opts) {
  const double denom = std::ldexp(1.0, q) + 1.0;
  const double x = static_cast<double>(i) / denom;
  const double y = static_cast<double>(j) / denom;
  double a = 1.0;
  for (int k = 1; k <= opts.factors; ++k) {
    const double f = std::ldexp(std::numbers::pi, k);
    a *= (1.0 + opts.amplitude * std::cos(f * (x + y))) * (1.0 + opts.amplitude * std::sin(f * (y - 3.0 * x)));
  }
  return a;
}

std::vector<double> multiscale_field(int q, const CoefficientOptions& opts) {
  const Index cells = (Index{1} << q) + 1;
  std::vector<double> field(static_cast<std::size_t>(cells * cells));
  for (Index j = 0; j < cells; ++j)
    for (Index i = 0; i < cells; ++i) field[j * cells + i] = multiscale_coefficient(q, i, j, opts);
  return field;
}

double GridProblem::coeff_min() const { return *std::min_element(coeff.begin(), coeff.end()); }
double GridProblem::coeff_max() const { return *std::max_element(coeff.begin(), coeff.end()); }

GridProblem assemble_fem(int q, std::vector<double> cell_field) {
  if (q < 1 || q > 12) throw ContractError("assemble_fem: q must lie in [1, 12]");
  const Index side = Index{1} << q;
  const Index cells = side + 1;
  if (static_cast<Index>(cell_field.size()) != cells * cells)
    throw ContractError("assemble_fem: cell field must hold (2^q + 1)^2 values");
  for (std::size_t c = 0; c < cell_field.size(); ++c)
    if (!(cell_field[c] > 0.0) || !std::isfinite(cell_field[c]))
      throw ContractError("assemble_fem: coefficient must be positive and finite (cell " + std::to_string(c) + ")");

  // Q1 element on a square, corners (0,0), (1,0), (0,1), (1,1); independent of h in 2D.
  static constexpr double kElem[4][4] = {{4.0 / 6, -1.0 / 6, -1.0 / 6, -2.0 / 6},
                                         {-1.0 / 6, 4.0 / 6, -2.0 / 6, -1.0 / 6},
                                         {-1.0 / 6, -2.0 / 6, 4.0 / 6, -1.0 / 6},
                                         {-2.0 / 6, -1.0 / 6, -1.0 / 6, 4.0 / 6}};
  static constexpr int kDi[4] = {0, 1, 0, 1};
  static constexpr int kDj[4] = {0, 0, 1, 1};

  GridProblem p;
  p.q = q;
  p.side = side;
  p.h = 1.0 / static_cast<double>(cells);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(cells * cells * 16));
  for (Index cj = 0; cj < cells; ++cj) {
    for (Index ci = 0; ci < cells; ++ci) {
      const double a = cell_field[cj * cells + ci];
      Index idx[4];
      for (int c = 0; c < 4; ++c) {
        const Index ni = ci + kDi[c];
        const Index nj = cj + kDj[c];
        const bool interior = ni >= 1 && ni <= side && nj >= 1 && nj <= side;
        idx[c] = interior ? (nj - 1) * side + (ni - 1) : -1;
      }
      for (int r = 0; r < 4; ++r) {
        if (idx[r] < 0) continue;
        for (int c = 0; c < 4; ++c)
          if (idx[c] >= 0) t.push_back({idx[r], idx[c], a * kElem[r][c]});
      }
    }
  }
  p.A = SparseMatrix::from_triplets(side * side, side * side, std::move(t)).with_symmetry_flag(1e-14);
  p.coeff = std::move(cell_field);
  return p;
}

GridProblem assemble_fem(int q, const CoefficientOptions& opts) {
  return assemble_fem(q, multiscale_field(q, opts));
}

IndexTree fem_tree(int q) {
  IndexTree tree = build_grid_tree(2, q, 2);
  const Index n = tree.size(q);
  const Index side = Index{1} << q;
  std::vector<Index> row_major(static_cast<std::size_t>(n));
  for (Index leaf = 0; leaf < n; ++leaf) {
    const auto tup = tree.tuple(q, leaf);
    Index x = 0;
    Index y = 0;
    for (int m = 0; m < q; ++m) {
      x = 2 * x + tup[m] % 2;
      y = 2 * y + tup[m] / 2;
    }
    row_major[leaf] = y * side + x;
  }
  return tree.relabel_leaves(row_major);
}

HierarchyOperators fem_operators(int q) { return make_haar_operators(fem_tree(q)); }

double smooth_source(double z1, double z2) {
  return std::cos(3.0 * z1 + z2) + std::sin(3.0 * z2) + std::sin(7.0 * z1 - 5.0 * z2);
}

Vector rhs_smooth(const GridProblem& prob) {
  Vector g(static_cast<std::size_t>(prob.size()));
  for (Index n = 0; n < prob.size(); ++n) {
    const auto z = prob.node(n);
    g[n] = smooth_source(z[0], z[1]);
  }
  return g;
}

Index dirac_index(int q) {
  const Index side = Index{1} << q;
  const Index c = side / 2;
  return c * side + c;
}

Vector rhs_dirac(const GridProblem& prob) {
  Vector g(static_cast<std::size_t>(prob.size()), 0.0);
  g[dirac_index(prob.q)] = std::ldexp(1.0, 2 * prob.q);
  return g;
}

SparseMatrix graph_laplacian(Index n, const std::vector<Edge>& edges, double reg) {
  if (!(reg >= 0.0)) throw ContractError("graph_laplacian: reg must be non-negative");
  if (n < 0) throw ContractError("graph_laplacian: negative node count");
  std::vector<Triplet> t;
  t.reserve(4 * edges.size() + static_cast<std::size_t>(n));
  for (const auto& e : edges) {
    if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n)
      throw ContractError("graph_laplacian: edge (" + std::to_string(e.a) + ", " + std::to_string(e.b) +
                          ") out of range");
    if (e.a == e.b) throw ContractError("graph_laplacian: self-loop at node " + std::to_string(e.a));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight))
      throw ContractError("graph_laplacian: weights must be positive and finite");
    t.push_back({e.a, e.a, e.weight});
    t.push_back({e.b, e.b, e.weight});
    t.push_back({e.a, e.b, -e.weight});
    t.push_back({e.b, e.a, -e.weight});
  }
  for (Index i = 0; i < n; ++i) t.push_back({i, i, reg});
  return SparseMatrix::from_triplets(n, n, std::move(t)).with_symmetry_flag();
}

std::vector<Edge> grid_graph_edges(Index side) {
  std::vector<Edge> e;
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x) {
      const Index i = y * side + x;
      if (x + 1 < side) e.push_back({i, i + 1, 1.0});
      if (y + 1 < side) e.push_back({i, i + side, 1.0});
    }
  return e;
}

IndexTree aggregation_tree(const SparseMatrix& a, Index coarse_size) {
  if (a.rows() != a.cols()) throw ContractError("aggregation_tree: matrix must be square");
  if (a.rows() == 0) throw ContractError("aggregation_tree: empty matrix");
  coarse_size = std::max<Index>(coarse_size, 1);

  // maps[s][i]: aggregate of label i after coarsening step s.
  std::vector<std::vector<Index>> maps;
  SparseMatrix g = a;
  while (g.rows() > coarse_size) {
    const Index n = g.rows();
    std::vector<Index> agg(static_cast<std::size_t>(n), -1);
    Index next = 0;
    for (Index i = 0; i < n; ++i) {
      if (agg[i] >= 0) continue;
      Index best = -1;
      double wbest = 0.0;
      const auto cols = g.row_cols(i);
      const auto vals = g.row_values(i);
      for (std::size_t s = 0; s < cols.size(); ++s) {
        const Index j = cols[s];
        if (j == i || agg[j] >= 0 || vals[s] == 0.0) continue;
        if (std::abs(vals[s]) > wbest) {
          wbest = std::abs(vals[s]);
          best = j;
        }
      }
      agg[i] = next;
      if (best >= 0) agg[best] = next;
      ++next;
    }
    if (next == n) break;  // no edge left to contract
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(g.nnz()));
    for (Index i = 0; i < n; ++i) {
      const auto cols = g.row_cols(i);
      const auto vals = g.row_values(i);
      for (std::size_t s = 0; s < cols.size(); ++s) t.push_back({agg[i], agg[cols[s]], std::abs(vals[s])});
    }
    g = SparseMatrix::from_triplets(next, next, std::move(t));
    maps.push_back(std::move(agg));
  }

  const int q = static_cast<int>(maps.size()) + 1;
  std::vector<std::vector<Index>> parents(static_cast<std::size_t>(q) + 1);
  // Level k (1..q) corresponds to coarsening step q - k; renumber top-down so
  // interior levels come out in tuple order.
  std::vector<Index> renum(static_cast<std::size_t>(g.rows()));
  std::iota(renum.begin(), renum.end(), Index{0});
  for (int k = 2; k <= q; ++k) {
    const auto& m = maps[static_cast<std::size_t>(q - k)];
    const Index n = static_cast<Index>(m.size());
    auto& par = parents[static_cast<std::size_t>(k)];
    par.resize(static_cast<std::size_t>(n));
    if (k == q) {
      for (Index i = 0; i < n; ++i) par[i] = renum[m[i]];
      break;
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return renum[m[x]] < renum[m[y]]; });
    std::vector<Index> next_renum(static_cast<std::size_t>(n));
    for (Index s = 0; s < n; ++s) {
      next_renum[order[s]] = s;
      par[s] = renum[m[order[s]]];
    }
    renum = std::move(next_renum);
  }
  return IndexTree::from_parents(g.rows(), std::move(parents));
}

}  // namespace gamblet
