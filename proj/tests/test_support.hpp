#pragma once

// Generators and independent dense oracles shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamblet/hierarchy.hpp"
#include "gamblet/sparse.hpp"

namespace testing {

using gamblet::DenseMatrix;
using gamblet::Index;
using gamblet::SparseMatrix;
using gamblet::Triplet;
using gamblet::Vector;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(gen_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
  Vector vector(Index n) {
    Vector v(static_cast<std::size_t>(n));
    for (auto& x : v) x = uniform();
    return v;
  }
  std::vector<Index> permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), Index{0});
    std::shuffle(p.begin(), p.end(), gen_);
    return p;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// Random sparse matrix with about `fill` nonzeros per row, duplicates allowed.
inline std::vector<Triplet> random_triplets(Rng& rng, Index rows, Index cols, Index fill) {
  std::vector<Triplet> t;
  for (Index i = 0; i < rows; ++i)
    for (Index s = 0; s < fill; ++s) t.push_back({i, rng.integer(0, cols - 1), rng.uniform()});
  return t;
}

/// Symmetric, strictly diagonally dominant (hence SPD) sparse matrix.
inline SparseMatrix random_spd(Rng& rng, Index n, Index fill = 3, double shift = 0.1) {
  std::vector<Triplet> t;
  std::vector<double> rowsum(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < fill; ++s) {
      const Index j = rng.integer(0, n - 1);
      if (j == i) continue;
      const double v = rng.uniform();
      t.push_back({i, j, v});
      t.push_back({j, i, v});
      rowsum[i] += std::abs(v);
      rowsum[j] += std::abs(v);
    }
  }
  for (Index i = 0; i < n; ++i) t.push_back({i, i, rowsum[i] + shift + rng.uniform(0.0, 1.0)});
  return SparseMatrix::from_triplets(n, n, std::move(t)).with_symmetry_flag();
}

/// Dense SPD matrix with eigenvalues spread geometrically over [1, cond].
inline DenseMatrix random_spd_with_cond(Rng& rng, Index n, double cond) {
  DenseMatrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.uniform();
  const Eigen::HouseholderQR<DenseMatrix> qr(g);
  const DenseMatrix qm = qr.householderQ();
  Eigen::VectorXd lam(n);
  for (Index i = 0; i < n; ++i) lam(i) = std::pow(cond, n > 1 ? static_cast<double>(i) / (n - 1) : 0.0);
  DenseMatrix m = qm * lam.asDiagonal() * qm.transpose();
  return 0.5 * (m + m.transpose());
}

inline SparseMatrix tridiag(Index n, double diag = 2.0, double off = -1.0) {
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) {
    t.push_back({i, i, diag});
    if (i + 1 < n) {
      t.push_back({i, i + 1, off});
      t.push_back({i + 1, i, off});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t)).with_symmetry_flag();
}

/// Random tree: `top` labels at level 1, between 1 and max_children children
/// per label, leaves optionally shuffled.
inline gamblet::IndexTree random_tree(Rng& rng, int q, Index top, Index max_children, bool shuffle_leaves) {
  std::vector<std::vector<Index>> parents(static_cast<std::size_t>(q) + 1);
  Index size = top;
  for (int k = 2; k <= q; ++k) {
    for (Index i = 0; i < size; ++i) {
      const Index c = rng.integer(1, max_children);
      for (Index s = 0; s < c; ++s) parents[k].push_back(i);
    }
    size = static_cast<Index>(parents[k].size());
  }
  auto tree = gamblet::IndexTree::from_parents(top, parents);
  if (shuffle_leaves) tree = tree.relabel_leaves(rng.permutation(tree.size(q)));
  return tree;
}

inline double max_abs(const DenseMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double max_diff(const Vector& a, const Vector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline Eigen::VectorXd dense_vec(const Vector& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

/// All-pairs BFS on a dense adjacency pattern; -1 for unreachable.
inline std::vector<std::vector<Index>> all_pairs_bfs(const std::vector<std::vector<bool>>& adj) {
  const auto n = adj.size();
  std::vector<std::vector<Index>> d(n, std::vector<Index>(n, -1));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> frontier{s};
    d[s][s] = 0;
    for (std::size_t head = 0; head < frontier.size(); ++head) {
      const auto u = frontier[head];
      for (std::size_t v = 0; v < n; ++v)
        if (adj[u][v] && d[s][v] < 0) {
          d[s][v] = d[s][u] + 1;
          frontier.push_back(v);
        }
    }
  }
  return d;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gamblet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
