#include <doctest.h>

#include "gamblet/diagnostics.hpp"
#include "gamblet/error.hpp"
#include "gamblet/gamblet_exact.hpp"
#include "gamblet/gamblet_fast.hpp"
#include "gamblet/problems.hpp"
#include "gamblet/solvers.hpp"
#include "test_support.hpp"

using namespace gamblet;
using testing::Rng;

namespace {

SparseMatrix path_laplacian(Index n) { return testing::tridiag(n); }

// Aggregated level-k adjacency computed from dense A and the ancestor map.
std::vector<std::vector<bool>> aggregated_pattern(const SparseMatrix& a, const IndexTree& tree, int k) {
  const Index n = tree.size(k);
  const auto anc = tree.ancestors(tree.depth(), k);
  const DenseMatrix ad = a.to_dense();
  std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n)));
  for (Index s = 0; s < ad.rows(); ++s)
    for (Index t = 0; t < ad.cols(); ++t)
      if (ad(s, t) != 0.0) adj[anc[s]][anc[t]] = true;
  return adj;
}

struct LevelData {
  SparseMatrix b;
  SparseMatrix z;
  DenseMatrix exact_d;
  std::vector<Index> cells;
  LevelGraphDistance dist;
};

LevelData top_level(const SparseMatrix& a, const HierarchyOperators& ops) {
  const int q = ops.depth();
  LevelData d;
  const SparseMatrix wa = multiply(ops.W[q], a);
  d.b = multiply(wa, ops.W[q].transpose()).symmetrized();
  d.z = multiply(wa, pseudo_inverse_pi(ops.pi[q - 1]).transpose());
  d.exact_d = dense_solve(d.b.to_dense(), d.z.to_dense());
  d.cells = ops.wavelet_cell[q];
  d.dist = LevelGraphDistance(a, ops.tree, q - 1);
  return d;
}

double rel_energy_error(const SparseMatrix& a, const Vector& u, const Vector& ref) {
  return energy_norm(a, add(u, ref, 1.0, -1.0)) / energy_norm(a, ref);
}

}  // namespace

TEST_SUITE("gamblet_fast") {

TEST_CASE("path graph distance") {
  const auto a = path_laplacian(4);
  const auto tree = build_grid_tree(1, 2, 2);
  const LevelGraphDistance d(a, tree, 2);
  CHECK(d.distance(0, 3) == 3);
  CHECK(d.ball(1, 1) == std::vector<Index>{0, 1, 2});
  const LevelGraphDistance coarse(a, tree, 1);
  CHECK(coarse.distance(0, 1) == 1);
}

TEST_CASE("disconnected blocks are at infinite distance") {
  const auto a = SparseMatrix::from_triplets(4, 4, {{0, 0, 2.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 2.0},
                                                    {2, 2, 2.0}, {2, 3, -1.0}, {3, 2, -1.0}, {3, 3, 2.0}});
  const LevelGraphDistance d(a, build_grid_tree(1, 2, 2), 2);
  CHECK(d.distance(0, 2) == LevelGraphDistance::kInfinity);
  CHECK(d.ball(0, 100) == std::vector<Index>{0, 1});
  CHECK(d.diameter_bound() == 1);
}

TEST_CASE("FEM level distances match brute-force BFS") {
  const int q = 4;
  const auto p = assemble_fem(q);
  const auto tree = fem_tree(q);
  for (int k : {2, 3}) {
    const LevelGraphDistance d(p.A, tree, k);
    const auto adj = aggregated_pattern(p.A, tree, k);
    const auto oracle = testing::all_pairs_bfs(adj);
    for (Index i = 0; i < tree.size(k); ++i) {
      CHECK(d.connectivity().row_cols(i).size() ==
            static_cast<std::size_t>(std::count(adj[i].begin(), adj[i].end(), true)));
      const auto from = d.distances_from(i);
      for (Index j = 0; j < tree.size(k); ++j) CHECK(from[j] == oracle[i][j]);
      for (Index rho : {0, 1, 2}) {
        std::vector<Index> expect;
        for (Index j = 0; j < tree.size(k); ++j)
          if (oracle[i][j] >= 0 && oracle[i][j] <= rho) expect.push_back(j);
        CHECK(d.ball(i, rho) == expect);
      }
    }
  }
}

TEST_CASE("graph distance is a metric on random graphs") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int q = static_cast<int>(rng.integer(1, 3));
    const auto tree = testing::random_tree(rng, q, rng.integer(1, 4), 3, rng.coin());
    const auto a = testing::random_spd(rng, tree.size(q), rng.integer(0, 2));
    const int k = static_cast<int>(rng.integer(1, q));
    const LevelGraphDistance d(a, tree, k);
    const auto oracle = testing::all_pairs_bfs(aggregated_pattern(a, tree, k));
    const Index n = tree.size(k);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const Index dij = d.distance(i, j);
        CHECK(dij == d.distance(j, i));
        CHECK((dij == 0) == (i == j));
        CHECK((dij == LevelGraphDistance::kInfinity) == (oracle[i][j] < 0));
        if (oracle[i][j] >= 0) CHECK(dij == oracle[i][j]);
        for (Index m = 0; m < n; ++m) {
          const Index dim = d.distance(i, m);
          const Index dmj = d.distance(m, j);
          if (dim != LevelGraphDistance::kInfinity && dmj != LevelGraphDistance::kInfinity)
            CHECK(dij <= dim + dmj);
        }
      }
  }
}

TEST_CASE("ball growth exponent of a square grid is near two") {
  const auto a = graph_laplacian(32 * 32, grid_graph_edges(32), 1e-3);
  const auto tree = build_grid_tree(1, 1, 32 * 32);
  const double d = ball_growth_exponent(LevelGraphDistance(a, tree, 1));
  CHECK(d > 1.6);
  CHECK(d < 2.2);
}

TEST_CASE("localized inverse with full radius is the exact inverse") {
  const auto p = assemble_fem(3);
  const auto ops = fem_operators(3);
  const auto l = top_level(p.A, ops);
  const Index diam = l.dist.diameter_bound();
  const DenseMatrix d = localized_inverse(l.b, l.z, l.dist, l.cells, diam, 1e-12).to_dense();
  CHECK(testing::max_abs(d - l.exact_d) <= 1e-12 * testing::max_abs(l.exact_d));
  // CG ball solves reach the same answer.
  const DenseMatrix dc = localized_inverse(l.b, l.z, l.dist, l.cells, diam, 1e-12, 0).to_dense();
  CHECK(testing::max_abs(dc - l.exact_d) <= 1e-9 * testing::max_abs(l.exact_d));
}

TEST_CASE("localized inverse with zero radius stays in the cell") {
  const auto p = assemble_fem(3);
  const auto ops = fem_operators(3);
  const auto l = top_level(p.A, ops);
  const auto d = localized_inverse(l.b, l.z, l.dist, l.cells, 0, 1e-12);
  CHECK(d.nnz() > 0);
  for (Index j = 0; j < d.rows(); ++j)
    for (Index i : d.row_cols(j)) CHECK(l.cells[j] == i);
}

TEST_CASE("localized inverse error shrinks as the radius grows") {
  const auto p = assemble_fem(3);
  const auto ops = fem_operators(3);
  const auto l = top_level(p.A, ops);
  const Index diam = l.dist.diameter_bound();
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> prev_cols(static_cast<std::size_t>(l.z.cols()), std::numeric_limits<double>::infinity());
  for (Index rho = 0; rho <= diam; ++rho) {
    const DenseMatrix diff = localized_inverse(l.b, l.z, l.dist, l.cells, rho, 1e-13).to_dense() - l.exact_d;
    const double err = diff.norm();
    CHECK(err <= prev * (1 + 1e-12));
    for (Index i = 0; i < diff.cols(); ++i) {
      const double e = diff.col(i).norm();
      CHECK(e <= prev_cols[i] * (1 + 1e-9) + 1e-14);
      prev_cols[i] = e;
    }
    prev = err;
  }
  CHECK(prev <= 1e-12);
}

TEST_CASE("localized inverse rejects bad shapes and singular balls") {
  const auto p = assemble_fem(2);
  const auto ops = fem_operators(2);
  const auto l = top_level(p.A, ops);
  CHECK_THROWS_AS(localized_inverse(l.b, l.z.transpose(), l.dist, l.cells, 1, 1e-10), ContractError);
  const auto zero = SparseMatrix::from_triplets(l.b.rows(), l.b.cols(), {{0, 0, 0.0}});
  try {
    localized_inverse(zero, l.z, l.dist, l.cells, 1, 1e-10);
    FAIL("expected SolveError");
  } catch (const SolveError& e) {
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("truncation") {
  const int q = 4;
  const auto p = assemble_fem(q);
  const auto tree = fem_tree(q);
  const auto h = gamblet_transform(p.A, make_haar_operators(tree), TransformOptions{{}, false});
  const SparseMatrix& m = h.A[3];
  const LevelGraphDistance d2(p.A, tree, 2);
  const auto& parent = tree.parents(3);
  // Full radius keeps everything.
  CHECK(max_abs_diff(truncate(m, d2, parent, d2.diameter_bound()), m) <= 1e-15 * m.max_abs());
  // Zero radius keeps only siblings.
  const auto t0 = truncate(m, d2, parent, 0);
  for (Index i = 0; i < t0.rows(); ++i)
    for (Index j : t0.row_cols(i)) CHECK(parent[i] == parent[j]);
  // Identity parent map and radius zero keep the diagonal.
  const LevelGraphDistance d3(p.A, tree, 3);
  const auto diag = truncate(m, d3, {}, 0);
  CHECK(diag.nnz() == m.rows());
  // Output is symmetric even for a non-symmetric input.
  Rng rng(4);
  const auto ns = SparseMatrix::from_triplets(m.rows(), m.cols(), testing::random_triplets(rng, m.rows(), m.cols(), 6));
  const auto ts = truncate(ns, d2, parent, 1);
  CHECK(max_abs_diff(ts, ts.transpose()) <= 1e-15 * ts.max_abs());
  CHECK(ts.symmetric());
}

TEST_CASE("radius schedule formula") {
  const auto s = default_schedule(0.5, 4, 0.1, 1.0);
  const double ln2 = std::log(2.0);
  const double r3 = 3.0 * (1.0 + 1.0 / ln2) * ln2 + std::log(10.0);
  CHECK(r3 == doctest::Approx(7.382).epsilon(1e-3));
  CHECK(s.rho[3] == static_cast<Index>(std::ceil(r3)));
  CHECK(s.rho[3] == 8);
  for (int k = 2; k <= 4; ++k) {
    CHECK(s.subband_tol[k] == doctest::Approx(0.1 / (2.0 * k * k)));
    CHECK(s.ball_tol[k] == doctest::Approx(std::pow(0.5, 3.0 - k + k) * 0.1 / (k * k)));
  }
  CHECK(s.coarse_tol == doctest::Approx(0.05));
}

TEST_CASE("schedule with epsilon one grows linearly in k") {
  const auto s = default_schedule(0.5, 8, 1.0, 1.0);
  const double step = (1.0 + 1.0 / std::log(2.0)) * std::log(2.0);
  for (int k = 1; k <= 8; ++k) CHECK(s.rho[k] == static_cast<Index>(std::ceil(k * step)));
}

TEST_CASE("doubling C_a doubles the unrounded radii") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const double H = rng.uniform(0.1, 0.9);
    const double eps = std::pow(10.0, rng.uniform(-6.0, 0.0));
    const double ca = rng.uniform(0.1, 3.0);
    const auto a = default_schedule(H, 6, eps, ca);
    const auto b = default_schedule(H, 6, eps, 2 * ca);
    for (int k = 1; k <= 6; ++k) {
      // ceil(2x) is 2 ceil(x) or 2 ceil(x) - 1.
      CHECK(b.rho[k] <= 2 * a.rho[k]);
      CHECK(b.rho[k] >= 2 * a.rho[k] - 1);
      const double lower = ca * ((1 + 1 / std::log(1 / H)) * k * std::log(1 / H) + std::log(1 / eps));
      CHECK(static_cast<double>(a.rho[k]) >= lower);
    }
  }
}

TEST_CASE("schedule argument checks") {
  CHECK_THROWS_AS(default_schedule(1.0, 3, 0.1, 1.0), ContractError);
  CHECK_THROWS_AS(default_schedule(0.5, 3, 0.0, 1.0), ContractError);
  CHECK_THROWS_AS(default_schedule(0.5, 3, 0.1, -1.0), ContractError);
  CHECK_THROWS_AS(uniform_schedule(0.5, 3, 0.1, 1.0, -1), ContractError);
  const auto u = uniform_schedule(0.5, 3, 0.1, 1.0, 4);
  CHECK(u.rho[1] == 4);
  CHECK(u.rho[3] == 4);
}

TEST_CASE("full radii reproduce the exact hierarchy") {
  const int q = 4;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const auto exact = gamblet_transform(p.A, ops);
  const auto sched = uniform_schedule(0.5, q, 1e-10, 1.0, 1000);
  const auto fast = fast_gamblet_transform(p.A, ops, sched);
  CHECK(fast.localized);
  for (int k = 1; k <= q; ++k) {
    CHECK(max_abs_diff(fast.A[k], exact.A[k]) <= 1e-10 * exact.A[k].max_abs());
    if (k >= 2) CHECK(max_abs_diff(fast.R[k], exact.R[k]) <= 1e-10);
  }
  const Vector g = rhs_smooth(p);
  const auto r = fast_gamblet_solve(p.A, ops, g, sched);
  const auto s = gamblet_solve(exact, ops, g);
  const auto rep = fast_vs_exact_report(s, r.solution, p.A);
  CHECK(rep.total <= 1e-9 * energy_norm(p.A, s.u));
  CHECK(r.stats.size() == static_cast<std::size_t>(q));
  CHECK(r.stats.front().level == 1);
  CHECK(r.stats.back().level == q);
  CHECK(r.total_nnz() > 0);
}

TEST_CASE("fast solve meets epsilon on a small FEM problem") {
  const int q = 4;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const Vector g = rhs_smooth(p);
  const auto ref = cg_solve(p.A, g, CgOptions{1e-14, 100000, false});
  for (double eps : {1e-2, 1e-3}) {
    const auto r = fast_gamblet_solve(p.A, ops, g, default_schedule(0.5, q, eps, 0.5));
    CHECK(rel_energy_error(p.A, r.solution.u, ref.x) <= eps);
  }
}

TEST_CASE("error over a uniform radius sweep does not increase") {
  const int q = 4;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const Vector g = rhs_smooth(p);
  const auto ref = cg_solve(p.A, g, CgOptions{1e-14, 100000, false});
  double prev = std::numeric_limits<double>::infinity();
  for (Index rho = 1; rho <= 5; ++rho) {
    const auto r = fast_gamblet_solve(p.A, ops, g, uniform_schedule(0.5, q, 1e-8, 1.0, rho));
    const double err = rel_energy_error(p.A, r.solution.u, ref.x);
    CHECK(err <= prev);
    prev = err;
  }
}

TEST_CASE("localized subband matrices stay well conditioned") {
  const int q = 4;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const auto exact = gamblet_transform(p.A, ops, TransformOptions{{}, false});
  const auto fast = fast_gamblet_transform(p.A, ops, default_schedule(0.5, q, 1e-3, 0.5));
  for (int k = 2; k <= q; ++k) CHECK(extreme_eigs(fast.B[k]).cond <= 4 * extreme_eigs(exact.B[k]).cond);
}

TEST_CASE("fast transform works on a graph Laplacian with an aggregation tree") {
  const auto a = graph_laplacian(16 * 16, grid_graph_edges(16), 1e-2);
  const auto ops = make_haar_operators(aggregation_tree(a, 4));
  Rng rng(8);
  const Vector b = rng.vector(a.rows());
  const auto ref = cg_solve(a, b, CgOptions{1e-14, 100000, false});
  const auto r = fast_gamblet_solve(a, ops, b, uniform_schedule(0.5, ops.depth(), 1e-8, 1.0, 1000));
  CHECK(rel_energy_error(a, r.solution.u, ref.x) <= 1e-7);
}

TEST_CASE("fast transform input checks") {
  const auto p = assemble_fem(2);
  const auto ops = fem_operators(2);
  CHECK_THROWS_AS(fast_gamblet_transform(p.A, ops, default_schedule(0.5, 1, 0.1, 1.0)), StructureError);
  CHECK_THROWS_AS(fast_gamblet_solve(p.A, ops, Vector(3, 1.0), default_schedule(0.5, 2, 0.1, 1.0)), ContractError);
}

}  // TEST_SUITE
