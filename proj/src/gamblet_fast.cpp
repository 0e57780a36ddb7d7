#include "gamblet/gamblet_fast.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "gamblet/error.hpp"
#include "gamblet/solvers.hpp"

namespace gamblet {

namespace {

constexpr Index kUnseen = -1;

Index doubled(Index rho) {
  return rho >= LevelGraphDistance::kInfinity / 2 ? LevelGraphDistance::kInfinity - 1 : 2 * rho;
}

// Wavelet-to-cell map; derived from the first nonzero of each W row when absent.
std::vector<Index> wavelet_cells(const HierarchyOperators& ops, int k) {
  const SparseMatrix& w = ops.W[k];
  if (k < static_cast<int>(ops.wavelet_cell.size()) &&
      static_cast<Index>(ops.wavelet_cell[k].size()) == w.rows())
    return ops.wavelet_cell[k];
  std::vector<Index> cell(static_cast<std::size_t>(w.rows()), 0);
  for (Index j = 0; j < w.rows(); ++j) {
    const auto cols = w.row_cols(j);
    const auto vals = w.row_values(j);
    Index c = -1;
    for (std::size_t s = 0; s < cols.size() && c < 0; ++s)
      if (vals[s] != 0.0) c = ops.tree.parent(k, cols[s]);
    if (c < 0) throw StructureError("wavelet row " + std::to_string(j) + " at level " + std::to_string(k) + " is zero");
    cell[j] = c;
  }
  return cell;
}

std::shared_ptr<const SpdSolver> level_solver(const SparseMatrix& m, SolverPolicy policy, double tol, int level) {
  policy.cg.tol = tol;
  try {
    return std::make_shared<const SpdSolver>(m, policy, 1);
  } catch (const NotSpdError& e) {
    throw SolveError(level, 0.0, std::string("localized operator is not SPD: ") + e.what());
  }
}

}  // namespace

LevelGraphDistance::LevelGraphDistance(const SparseMatrix& a, const IndexTree& tree, int k) : level_(k) {
  const int q = tree.depth();
  if (a.rows() != a.cols() || a.rows() != tree.size(q))
    throw StructureError("LevelGraphDistance: A does not match the tree");
  const auto anc = tree.ancestors(q, k);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nnz()));
  for (Index s = 0; s < a.rows(); ++s) {
    const auto cols = a.row_cols(s);
    const auto vals = a.row_values(s);
    for (std::size_t p = 0; p < cols.size(); ++p)
      if (vals[p] != 0.0) t.push_back({anc[s], anc[cols[p]], 1.0});
  }
  const Index n = tree.size(k);
  const SparseMatrix summed = SparseMatrix::from_triplets(n, n, std::move(t));
  conn_ = SparseMatrix::from_csr(n, n, {summed.row_offsets().begin(), summed.row_offsets().end()},
                                 {summed.col_indices().begin(), summed.col_indices().end()},
                                 std::vector<double>(static_cast<std::size_t>(summed.nnz()), 1.0));
}

std::vector<Index> LevelGraphDistance::ball(Index i, Index rho) const {
  BallWorkspace ws;
  return ball(i, rho, ws);
}

std::vector<Index> LevelGraphDistance::ball(Index i, Index rho, BallWorkspace& ws) const {
  const Index n = size();
  if (i < 0 || i >= n) throw ContractError("ball: label out of range");
  if (static_cast<Index>(ws.dist.size()) != n) ws.dist.assign(static_cast<std::size_t>(n), kUnseen);
  ws.touched.clear();
  ws.touched.push_back(i);
  ws.dist[i] = 0;
  for (std::size_t head = 0; head < ws.touched.size(); ++head) {
    const Index u = ws.touched[head];
    if (ws.dist[u] >= rho) continue;
    for (Index v : conn_.row_cols(u)) {
      if (ws.dist[v] != kUnseen) continue;
      ws.dist[v] = ws.dist[u] + 1;
      ws.touched.push_back(v);
    }
  }
  std::vector<Index> out = ws.touched;
  for (Index v : out) ws.dist[v] = kUnseen;
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Index> LevelGraphDistance::distances_from(Index i) const {
  const Index n = size();
  if (i < 0 || i >= n) throw ContractError("distances_from: label out of range");
  std::vector<Index> d(static_cast<std::size_t>(n), kInfinity);
  std::vector<Index> queue{i};
  d[i] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Index u = queue[head];
    for (Index v : conn_.row_cols(u)) {
      if (d[v] != kInfinity) continue;
      d[v] = d[u] + 1;
      queue.push_back(v);
    }
  }
  return d;
}

Index LevelGraphDistance::distance(Index i, Index j) const {
  if (j < 0 || j >= size()) throw ContractError("distance: label out of range");
  return distances_from(i)[j];
}

Index LevelGraphDistance::diameter_bound() const {
  const Index n = size();
  Index best = 0;
  if (n <= 1024) {
    for (Index i = 0; i < n; ++i)
      for (Index d : distances_from(i))
        if (d != kInfinity) best = std::max(best, d);
    return best;
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index r = 0; r < n; ++r) {
    if (seen[r]) continue;
    Index ecc = 0;
    const auto d = distances_from(r);
    for (Index v = 0; v < n; ++v)
      if (d[v] != kInfinity) {
        seen[v] = 1;
        ecc = std::max(ecc, d[v]);
      }
    best = std::max(best, 2 * ecc);
  }
  return best;
}

double ball_growth_exponent(const LevelGraphDistance& dist, Index max_radius) {
  const Index n = dist.size();
  if (n < 2 || max_radius < 2) return 1.0;
  const Index centres = std::min<Index>(8, n);
  BallWorkspace ws;
  std::vector<double> xs;
  std::vector<double> ys;
  for (Index rho = 1; rho <= max_radius; ++rho) {
    double total = 0.0;
    for (Index c = 0; c < centres; ++c) total += static_cast<double>(dist.ball(c * n / centres, rho, ws).size());
    // A lattice ball holds about (2 rho + 1)^d labels, hence the half offset.
    xs.push_back(std::log(static_cast<double>(rho) + 0.5));
    ys.push_back(std::log(total / static_cast<double>(centres)));
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    sxy += (xs[s] - mx) * (ys[s] - my);
    sxx += (xs[s] - mx) * (xs[s] - mx);
  }
  return std::max(sxy / sxx, 0.5);
}

LocalizationSchedule default_schedule(double H, int q, double epsilon, double C_a, double d) {
  if (!(H > 0.0 && H < 1.0)) throw ContractError("default_schedule: H must lie in (0, 1)");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ContractError("default_schedule: epsilon must lie in (0, 1]");
  if (!(C_a > 0.0)) throw ContractError("default_schedule: C_a must be positive");
  if (q < 1) throw ContractError("default_schedule: q must be at least 1");
  LocalizationSchedule s;
  s.H = H;
  s.epsilon = epsilon;
  s.C_a = C_a;
  s.d = d;
  const auto levels = static_cast<std::size_t>(q) + 1;
  s.rho.assign(levels, 0);
  s.subband_tol.assign(levels, 0.0);
  s.ball_tol.assign(levels, 0.0);
  const double lh = std::log(1.0 / H);
  for (int k = 1; k <= q; ++k) {
    const double r = C_a * ((1.0 + 1.0 / lh) * k * lh + std::log(1.0 / epsilon));
    s.rho[k] = static_cast<Index>(std::ceil(r));
    if (k >= 2) {
      const double k2 = static_cast<double>(k) * k;
      s.subband_tol[k] = epsilon / (2.0 * k2);
      s.ball_tol[k] = std::pow(H, 3.0 - k + k * d / 2.0) * epsilon / (C_a * k2);
    }
  }
  s.coarse_tol = epsilon / 2.0;
  return s;
}

LocalizationSchedule uniform_schedule(double H, int q, double epsilon, double C_a, Index rho, double d) {
  if (rho < 0) throw ContractError("uniform_schedule: rho must be non-negative");
  LocalizationSchedule s = default_schedule(H, q, epsilon, C_a, d);
  std::fill(s.rho.begin() + 1, s.rho.end(), rho);
  return s;
}

SparseMatrix localized_inverse(const SparseMatrix& b_loc, const SparseMatrix& z, const LevelGraphDistance& dist,
                               std::span<const Index> wavelet_cell, Index rho, double tol, Index dense_limit) {
  const Index nj = b_loc.rows();
  const Index ni = dist.size();
  if (b_loc.cols() != nj || z.rows() != nj || z.cols() != ni || static_cast<Index>(wavelet_cell.size()) != nj)
    throw ContractError("localized_inverse: shape mismatch");
  const int level = dist.level() + 1;

  // Cell -> wavelets.
  std::vector<Index> off(static_cast<std::size_t>(ni) + 1, 0);
  for (Index c : wavelet_cell) {
    if (c < 0 || c >= ni) throw StructureError("localized_inverse: wavelet cell out of range");
    ++off[c + 1];
  }
  std::partial_sum(off.begin(), off.end(), off.begin());
  std::vector<Index> members(static_cast<std::size_t>(nj));
  {
    std::vector<Index> fill(off.begin(), off.end() - 1);
    for (Index j = 0; j < nj; ++j) members[fill[wavelet_cell[j]]++] = j;
  }
  const SparseMatrix zt = z.transpose();

  const Index chunks = std::min<Index>(std::max(thread_count(), 1), std::max<Index>(ni, 1));
  std::vector<std::vector<Triplet>> parts(static_cast<std::size_t>(chunks));
  parallel_for(chunks, [&](Index c) {
    BallWorkspace ws;
    std::vector<Index> local(static_cast<std::size_t>(nj), -1);
    auto& out = parts[c];
    for (Index i = c * ni / chunks; i < (c + 1) * ni / chunks; ++i) {
      std::vector<Index> ji;
      for (Index cell : dist.ball(i, rho, ws))
        for (Index p = off[cell]; p < off[cell + 1]; ++p) ji.push_back(members[p]);
      if (ji.empty()) continue;
      std::sort(ji.begin(), ji.end());
      const Index m = static_cast<Index>(ji.size());
      for (Index s = 0; s < m; ++s) local[ji[s]] = s;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
      bool any = false;
      const auto zc = zt.row_cols(i);
      const auto zv = zt.row_values(i);
      for (std::size_t p = 0; p < zc.size(); ++p)
        if (local[zc[p]] >= 0 && zv[p] != 0.0) {
          rhs(local[zc[p]]) = zv[p];
          any = true;
        }
      if (any) {
        Eigen::VectorXd y;
        if (m <= dense_limit) {
          DenseMatrix x = DenseMatrix::Zero(m, m);
          for (Index s = 0; s < m; ++s) {
            const auto bc = b_loc.row_cols(ji[s]);
            const auto bv = b_loc.row_values(ji[s]);
            for (std::size_t p = 0; p < bc.size(); ++p)
              if (local[bc[p]] >= 0) x(s, local[bc[p]]) = bv[p];
          }
          Eigen::LLT<DenseMatrix> llt(x);
          if (llt.info() != Eigen::Success)
            throw SolveError(level, 0.0, "ball system for column " + std::to_string(i) + " is not SPD");
          y = llt.solve(rhs);
        } else {
          // ji is sorted, so local indices keep each row's column order.
          std::vector<Index> xo(static_cast<std::size_t>(m) + 1, 0);
          std::vector<Index> xc;
          std::vector<double> xv;
          for (Index s = 0; s < m; ++s) {
            const auto bc = b_loc.row_cols(ji[s]);
            const auto bv = b_loc.row_values(ji[s]);
            for (std::size_t p = 0; p < bc.size(); ++p)
              if (local[bc[p]] >= 0) {
                xc.push_back(local[bc[p]]);
                xv.push_back(bv[p]);
              }
            xo[s + 1] = static_cast<Index>(xc.size());
          }
          const SparseMatrix x = SparseMatrix::from_csr(m, m, std::move(xo), std::move(xc), std::move(xv));
          CgResult r = cg_solve(x, to_vector(rhs), CgOptions{tol, 20000, false});
          if (!r.converged)
            throw SolveError(level, r.residual, "ball solve for column " + std::to_string(i) + " did not converge");
          y = to_eigen(r.x);
        }
        for (Index s = 0; s < m; ++s)
          if (y(s) != 0.0) out.push_back({ji[s], i, y(s)});
      }
      for (Index j : ji) local[j] = -1;
    }
  });
  std::vector<Triplet> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return SparseMatrix::from_triplets(nj, ni, std::move(all));
}

SparseMatrix truncate(const SparseMatrix& m, const LevelGraphDistance& dist, std::span<const Index> parent,
                      Index rho) {
  if (m.rows() != m.cols()) throw ContractError("truncate: matrix must be square");
  const Index n = m.rows();
  const Index nc = dist.size();
  std::vector<Index> par(static_cast<std::size_t>(n));
  if (parent.empty()) {
    if (n != nc) throw ContractError("truncate: matrix does not match the distance level");
    std::iota(par.begin(), par.end(), Index{0});
  } else {
    if (static_cast<Index>(parent.size()) != n) throw ContractError("truncate: parent map length mismatch");
    par.assign(parent.begin(), parent.end());
  }
  // Group rows by parent so each ball is computed once.
  std::vector<Index> off(static_cast<std::size_t>(nc) + 1, 0);
  for (Index p : par) {
    if (p < 0 || p >= nc) throw ContractError("truncate: parent out of range");
    ++off[p + 1];
  }
  std::partial_sum(off.begin(), off.end(), off.begin());
  std::vector<Index> rows(static_cast<std::size_t>(n));
  {
    std::vector<Index> fill(off.begin(), off.end() - 1);
    for (Index i = 0; i < n; ++i) rows[fill[par[i]]++] = i;
  }
  const Index radius = doubled(rho);
  std::vector<char> near(static_cast<std::size_t>(nc), 0);
  std::vector<char> keep_row(static_cast<std::size_t>(m.nnz()), 0);
  BallWorkspace ws;
  const auto offsets = m.row_offsets();
  const auto cols = m.col_indices();
  for (Index p = 0; p < nc; ++p) {
    if (off[p] == off[p + 1]) continue;
    const auto b = dist.ball(p, radius, ws);
    for (Index c : b) near[c] = 1;
    for (Index s = off[p]; s < off[p + 1]; ++s) {
      const Index i = rows[s];
      for (Index e = offsets[i]; e < offsets[i + 1]; ++e) keep_row[e] = near[par[cols[e]]];
    }
    for (Index c : b) near[c] = 0;
  }
  std::vector<Index> new_off(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Index> new_cols;
  std::vector<double> new_vals;
  const auto vals = m.values();
  for (Index i = 0; i < n; ++i) {
    for (Index e = offsets[i]; e < offsets[i + 1]; ++e)
      if (keep_row[e]) {
        new_cols.push_back(cols[e]);
        new_vals.push_back(vals[e]);
      }
    new_off[i + 1] = static_cast<Index>(new_cols.size());
  }
  return SparseMatrix::from_csr(n, n, std::move(new_off), std::move(new_cols), std::move(new_vals)).symmetrized();
}

Index FastResult::total_nnz() const {
  Index t = 0;
  for (const auto& s : stats) t += s.nnz_A + s.nnz_B + s.nnz_R;
  return t;
}

GambletHierarchy fast_gamblet_transform(const SparseMatrix& a, const HierarchyOperators& ops,
                                        const LocalizationSchedule& sched, const SolverPolicy& policy,
                                        std::vector<FastLevelStats>* stats) {
  const int q = ops.depth();
  if (q < 1) throw StructureError("fast_gamblet_transform: empty hierarchy");
  if (a.rows() != a.cols() || a.rows() != ops.level_size(q))
    throw StructureError("fast_gamblet_transform: A does not match the tree");
  if (!a.symmetric() && !a.is_symmetric()) throw ContractError("fast_gamblet_transform: A is not symmetric");
  if (sched.depth() < q || static_cast<int>(sched.subband_tol.size()) < q + 1 ||
      static_cast<int>(sched.ball_tol.size()) < q + 1)
    throw StructureError("fast_gamblet_transform: schedule has " + std::to_string(sched.depth()) +
                         " levels, hierarchy has " + std::to_string(q));

  GambletHierarchy h;
  const auto levels = static_cast<std::size_t>(q) + 1;
  h.q = q;
  h.localized = true;
  h.A.resize(levels);
  h.B.resize(levels);
  h.R.resize(levels);
  h.N.resize(levels);
  h.Psi.resize(levels);
  h.Chi.resize(levels);
  h.pibar.resize(levels);
  h.solver.resize(levels);
  h.A[q] = a.symmetric() ? a : a.symmetrized();
  for (int k = 1; k < q; ++k) h.pibar[k] = pseudo_inverse_pi(ops.pi[k]);

  std::vector<LevelGraphDistance> dist(levels);
  for (int k = 1; k < q; ++k) dist[k] = LevelGraphDistance(a, ops.tree, k);
  if (stats) stats->assign(levels, FastLevelStats{});

  for (int k = q; k >= 2; --k) {
    const SparseMatrix& w = ops.W[k];
    const SparseMatrix& ak = h.A[k];
    if (w.cols() != ak.rows())
      throw StructureError("fast_gamblet_transform: W at level " + std::to_string(k) + " has wrong shape");
    const SparseMatrix wa = multiply(w, ak);
    h.B[k] = multiply(wa, w.transpose()).symmetrized();
    h.solver[k] = level_solver(h.B[k], policy, sched.subband_tol[k], k);
    const SparseMatrix z = multiply(wa, h.pibar[k - 1].transpose());
    const auto cells = wavelet_cells(ops, k);
    const SparseMatrix d = localized_inverse(h.B[k], z, dist[k - 1], cells, sched.rho[k - 1], sched.ball_tol[k],
                                             policy.dense_threshold);
    h.R[k] = add(h.pibar[k - 1], multiply(d.transpose(), w), 1.0, -1.0);
    const SparseMatrix rar = triple_product(h.R[k], ak);
    if (k >= 3) {
      h.A[k - 1] = truncate(rar, dist[k - 2], ops.tree.parents(k - 1), sched.rho[k - 2]);
    } else {
      h.A[k - 1] = rar.symmetrized();
    }
    if (stats) {
      auto& st = (*stats)[k];
      st.level = k;
      st.size = ak.rows();
      st.nnz_A = ak.nnz();
      st.nnz_B = h.B[k].nnz();
      st.nnz_R = h.R[k].nnz();
      st.rho_inv = sched.rho[k - 1];
      st.rho_trun = k >= 3 ? sched.rho[k - 2] : -1;
      st.dense_solver = h.solver[k]->is_dense();
    }
  }
  h.solver[1] = level_solver(h.A[1], policy, sched.coarse_tol, 1);
  if (stats) {
    auto& st = (*stats)[1];
    st.level = 1;
    st.size = h.A[1].rows();
    st.nnz_A = h.A[1].nnz();
    st.dense_solver = h.solver[1]->is_dense();
    stats->erase(stats->begin());
  }
  return h;
}

FastResult fast_gamblet_solve(const SparseMatrix& a, const HierarchyOperators& ops, std::span<const double> g,
                              const LocalizationSchedule& sched, const SolverPolicy& policy) {
  using clock = std::chrono::steady_clock;
  if (static_cast<Index>(g.size()) != a.rows()) throw ContractError("fast_gamblet_solve: rhs length mismatch");
  FastResult res;
  const auto t0 = clock::now();
  res.hierarchy = fast_gamblet_transform(a, ops, sched, policy, &res.stats);
  const auto t1 = clock::now();
  res.solution = gamblet_solve(res.hierarchy, ops, g);
  const auto t2 = clock::now();
  res.transform_seconds = std::chrono::duration<double>(t1 - t0).count();
  res.solve_seconds = std::chrono::duration<double>(t2 - t1).count();
  return res;
}

}  // namespace gamblet
