// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// gating criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include <fmt/core.h>

#include "cli.hpp"
#include "gamblet/diagnostics.hpp"
#include "gamblet/gamblet_exact.hpp"
#include "gamblet/gamblet_fast.hpp"
#include "gamblet/problems.hpp"
#include "gamblet/solvers.hpp"
#include "test_support.hpp"

using namespace gamblet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body, bool gating = true) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const char* tag = o.pass ? "PASS" : (gating ? "FAIL" : "FAIL (informational)");
  fmt::print("{} {:2d} {}: {} [{:.2f} s]\n", tag, id, name, o.detail, seconds_since(t0));
  std::fflush(stdout);
  if (!o.pass && gating) ++failures;
}

double a_norm(const SparseMatrix& a, const Vector& x) { return energy_norm(a, x); }

double a_dist(const SparseMatrix& a, const Vector& x, const Vector& y) { return energy_norm(a, add(x, y, 1.0, -1.0)); }

Vector direct_solve(const SparseMatrix& a, const Vector& b) {
  const Eigen::VectorXd x = cholesky(a.to_dense()).solve(to_eigen(b));
  return to_vector(x);
}

Outcome exactness() {
  const auto p = assemble_fem(5);
  const auto ops = fem_operators(5);
  const Vector g = rhs_smooth(p);
  const auto t0 = Clock::now();
  const auto h = gamblet_transform(p.A, ops, TransformOptions{{}, false});
  const auto s = gamblet_solve(h, ops, g);
  const double secs = seconds_since(t0);
  const Vector ref = direct_solve(p.A, g);
  const double err = a_dist(p.A, s.u, ref) / a_norm(p.A, ref);
  return {err <= 1e-8 && secs <= 10.0, fmt::format("N=1024 rel A-err {:.3e} (<= 1e-8), runtime {:.2f} s (<= 10)", err, secs)};
}

Outcome orthogonal_decomposition() {
  const auto p = assemble_fem(5);
  const auto ops = fem_operators(5);
  const auto h = gamblet_transform(p.A, ops, TransformOptions{{}, false});
  double worst_pair = 0.0;
  double worst_sum = 0.0;
  for (const Vector& g : {rhs_smooth(p), rhs_dirac(p)}) {
    const auto s = gamblet_solve(h, ops, g);
    std::vector<Vector> av(6);
    std::vector<double> nrm(6, 0.0);
    double sum = 0.0;
    for (int k = 1; k <= 5; ++k) {
      av[k] = spmv(p.A, s.v[k]);
      nrm[k] = std::sqrt(std::max(0.0, dot(s.v[k], av[k])));
      sum += nrm[k] * nrm[k];
    }
    for (int j = 1; j <= 5; ++j)
      for (int k = j + 1; k <= 5; ++k) {
        const double denom = nrm[j] * nrm[k];
        if (denom > 0.0) worst_pair = std::max(worst_pair, std::abs(dot(s.v[j], av[k])) / denom);
      }
    const double total = dot(s.u, spmv(p.A, s.u));
    worst_sum = std::max(worst_sum, std::abs(sum - total) / total);
  }
  return {worst_pair <= 1e-9 && worst_sum <= 1e-9,
          fmt::format("max |<v_j,v_k>_A|/(|v_j||v_k|) {:.2e} (<= 1e-9), energy sum rel dev {:.2e} (<= 1e-9)",
                      worst_pair, worst_sum)};
}

Outcome uniform_conditioning() {
  const auto t0 = Clock::now();
  const auto p = assemble_fem(6);
  const auto h = gamblet_transform(p.A, fem_operators(6), TransformOptions{{}, false});
  const auto c = level_conditioning(h);
  const double secs = seconds_since(t0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  std::string list;
  for (int k = 2; k <= 6; ++k) {
    lo = std::min(lo, c[k].cond);
    hi = std::max(hi, c[k].cond);
    list += fmt::format("{}{:.2f}", k == 2 ? "" : ",", c[k].cond);
  }
  const bool ok = std::isfinite(c[1].cond) && hi / lo <= 10.0 && hi <= 100.0 && secs <= 60.0;
  return {ok, fmt::format("cond B_2..6 = [{}], max/min {:.2f} (<= 10), max {:.2f} (<= 100), runtime {:.1f} s (<= 60)",
                          list, hi / lo, hi, secs)};
}

Outcome error_decay() {
  const auto p = assemble_fem(5);
  const auto ops = fem_operators(5);
  const auto h = gamblet_transform(p.A, ops, TransformOptions{{}, false});
  const auto e = error_curve(h, ops, rhs_smooth(p));
  // e_5 = 0 exactly, so the ratios that carry information are e_2/e_1 .. e_4/e_3.
  double log_sum = 0.0;
  std::string list;
  for (int k = 1; k <= 3; ++k) {
    const double r = e[k + 1] / e[k];
    log_sum += std::log(r);
    list += fmt::format("{}{:.3f}", k == 1 ? "" : ",", r);
  }
  const double gm = std::exp(log_sum / 3.0);
  return {gm >= 0.2 && gm <= 0.75,
          fmt::format("ratios [{}], e_5 {:.1e}, geometric mean {:.3f} (in [0.2, 0.75])", list, e[5], gm)};
}

double oracle_gap(const SparseMatrix& a, const HierarchyOperators& ops) {
  const auto h = gamblet_transform(a, ops);
  const DenseMatrix ad = a.to_dense();
  double worst = 0.0;
  for (int k = 1; k <= ops.depth(); ++k) {
    const DenseMatrix oracle = gamblet_oracle_all(ad, measurement_matrix(ops, k).to_dense());
    worst = std::max(worst, testing::max_abs(h.Psi[k].to_dense() - oracle));
  }
  return worst;
}

Outcome oracle_equivalence() {
  const double fem = oracle_gap(assemble_fem(3).A, fem_operators(3));
  testing::Rng rng(2024);
  const auto a = testing::random_spd(rng, 32, 4).with_symmetry_flag();
  const double rnd = oracle_gap(a, make_haar_operators(build_grid_tree(1, 5, 2)));
  return {fem <= 1e-8 && rnd <= 1e-8,
          fmt::format("max |Psi - oracle|: FEM q=3 {:.2e}, random SPD 32 {:.2e} (<= 1e-8)", fem, rnd)};
}

Outcome basis_decay() {
  const int q = 5;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const auto h = gamblet_transform(p.A, ops);
  Index sampled = 0;
  Index psi_ok = 0;
  Index stiff_ok = 0;
  std::string per_level;
  for (int k = 2; k <= 4; ++k) {
    const LevelGraphDistance dist(p.A, ops.tree, k);
    const Index n = ops.level_size(k);
    const Index stride = std::max<Index>(1, n / 32);
    Index lp = 0;
    Index ls = 0;
    Index lc = 0;
    for (Index i = 0; i < n; i += stride) {
      const auto prof = decay_profile(h, ops.tree, dist, i);
      const bool a = prof.psi_fit.points >= 2 && prof.psi_fit.slope < 0.0 && prof.psi_fit.r2 >= 0.8;
      const bool b = prof.stiffness_fit.points >= 2 && prof.stiffness_fit.slope < 0.0 && prof.stiffness_fit.r2 >= 0.8;
      lp += a;
      ls += b;
      ++lc;
    }
    sampled += lc;
    psi_ok += lp;
    stiff_ok += ls;
    per_level += fmt::format(" k={}:{}/{},{}/{}", k, lp, lc, ls, lc);
  }
  const double fp = static_cast<double>(psi_ok) / sampled;
  const double fs = static_cast<double>(stiff_ok) / sampled;
  return {fp >= 0.9 && fs >= 0.9,
          fmt::format("rows with slope<0, R2>=0.8: gamblets {:.0f}%, stiffness {:.0f}% (>= 90%) [psi,stiff per level:{}]",
                      100 * fp, 100 * fs, per_level)};
}

Outcome fast_accuracy(double C_a) {
  const int q = 5;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const Vector g = rhs_smooth(p);
  const auto h = gamblet_transform(p.A, ops, TransformOptions{{}, false});
  const auto exact = gamblet_solve(h, ops, g);
  const double scale = a_norm(p.A, exact.u);
  bool ok = true;
  std::string detail = fmt::format("C_a {:.3g}, S {:.4e};", C_a, scale);
  for (double eps : {1e-2, 1e-3}) {
    const auto r = fast_gamblet_solve(p.A, ops, g, default_schedule(0.5, q, eps, C_a));
    const double err = a_dist(p.A, r.solution.u, exact.u);
    ok = ok && err <= eps * scale;
    detail += fmt::format(" eps {:.0e}: err {:.3e} (<= {:.3e});", eps, err, eps * scale);
  }
  std::vector<double> sweep;
  for (Index rho = 1; rho <= 6; ++rho) {
    const auto r = fast_gamblet_solve(p.A, ops, g, uniform_schedule(0.5, q, 1e-8, C_a, rho));
    sweep.push_back(a_dist(p.A, r.solution.u, exact.u) / scale);
  }
  bool mono = true;
  std::string list;
  for (std::size_t s = 0; s < sweep.size(); ++s) {
    if (s > 0 && sweep[s] > sweep[s - 1]) mono = false;
    list += fmt::format("{}{:.2e}", s == 0 ? "" : ",", sweep[s]);
  }
  const double ratio = sweep.back() / sweep.front();
  ok = ok && mono && ratio <= 0.1;
  detail += fmt::format(" rho sweep 1..6 rel err [{}] nonincreasing={} final/initial {:.2e} (<= 0.1)", list,
                        mono ? "yes" : "no", ratio);
  return {ok, detail};
}

Outcome localized_conditioning(double C_a) {
  const int q = 5;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const auto exact = level_conditioning(gamblet_transform(p.A, ops, TransformOptions{{}, false}));
  const auto fast = fast_gamblet_transform(p.A, ops, default_schedule(0.5, q, 1e-3, C_a));
  double worst = 0.0;
  std::string list;
  for (int k = 2; k <= q; ++k) {
    const double r = extreme_eigs(fast.B[k]).cond / exact[k].cond;
    worst = std::max(worst, r);
    list += fmt::format("{}{:.3f}", k == 2 ? "" : ",", r);
  }
  return {worst <= 4.0, fmt::format("cond(B_loc)/cond(B) k=2..5 [{}], max {:.3f} (<= 4)", list, worst)};
}

Outcome growth(double C_a) {
  std::vector<std::pair<double, double>> times;
  std::vector<std::pair<double, double>> nnz;
  std::string list;
  for (int q : {5, 6, 7}) {
    const auto p = assemble_fem(q);
    const auto ops = fem_operators(q);
    const Vector g = rhs_smooth(p);
    const auto t0 = Clock::now();
    const auto r = fast_gamblet_solve(p.A, ops, g, default_schedule(0.5, q, 1e-3, C_a));
    const double secs = seconds_since(t0);
    const double n = static_cast<double>(p.size());
    times.emplace_back(std::log(n), secs);
    nnz.emplace_back(std::log(n), static_cast<double>(r.total_nnz()));
    list += fmt::format(" N={}: {:.2f} s, nnz {};", p.size(), secs, r.total_nnz());
  }
  const auto ft = log_linear_fit(times);
  const auto fn = log_linear_fit(nnz);
  return {ft.slope <= 1.5 && fn.slope <= 1.3,
          fmt::format("{} runtime exponent {:.3f} (<= 1.5), nnz exponent {:.3f} (<= 1.3)", list, ft.slope, fn.slope)};
}

Outcome poincare_fit() {
  const auto p = assemble_fem(4);
  const auto pc = poincare_constants(p.A, fem_operators(4));
  return {pc.H >= 0.35 && pc.H <= 0.65, fmt::format("fitted H {:.4f} (in [0.35, 0.65]), C {:.3f}", pc.H, pc.C)};
}

Outcome posterior_monotone() {
  const int q = 3;
  const auto p = assemble_fem(q);
  const auto ops = fem_operators(q);
  const auto h = gamblet_transform(p.A, ops);
  Vector prev = posterior_cov_diag(h, ops, 1);
  double worst_increase = 0.0;
  for (int k = 2; k <= q; ++k) {
    const Vector cur = posterior_cov_diag(h, ops, k);
    for (std::size_t i = 0; i < cur.size(); ++i) worst_increase = std::max(worst_increase, cur[i] - prev[i]);
    prev = cur;
  }
  const double last = max_abs(prev);
  return {worst_increase <= 1e-10 && last <= 1e-10,
          fmt::format("max increase {:.2e} (<= 1e-10), max |diag Gamma_q| {:.2e} (<= 1e-10)", worst_increase, last)};
}

Outcome micro_example() {
  const auto a =
      SparseMatrix::from_triplets(2, 2, {{0, 0, 2.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 2.0}}).with_symmetry_flag();
  const auto ops = make_haar_operators(IndexTree::from_parents(1, {{}, {}, {0, 0}}));
  const auto h = gamblet_transform(a, ops);
  const Vector b{1.0, 0.0};
  const auto s = gamblet_solve(h, ops, b);
  const auto e = error_curve(h, ops, b);
  const Vector gamma = posterior_cov_diag(h, ops, 1);
  const double dev = std::max({std::abs(h.B[2].coeff(0, 0) - 3.0), std::abs(h.A[1].coeff(0, 0) - 1.0),
                               std::abs(s.u[0] - 2.0 / 3), std::abs(s.u[1] - 1.0 / 3),
                               std::abs(e[1] - 1.0 / std::sqrt(6.0)), std::abs(gamma[0] - 1.0 / 6),
                               std::abs(gamma[1] - 1.0 / 6)});
  return {dev <= 1e-12, fmt::format("B2 {:.15g}, A1 {:.15g}, u ({:.15g}, {:.15g}), |u-u1|_A {:.15g}, "
                                    "Gamma1 ({:.15g}, {:.15g}); max dev {:.1e} (<= 1e-12)",
                                    h.B[2].coeff(0, 0), h.A[1].coeff(0, 0), s.u[0], s.u[1], e[1], gamma[0], gamma[1],
                                    dev)};
}

}  // namespace

int main() {
  const double C_a = cli::calibrated_C_a();
  report(1, "exactness", exactness);
  report(2, "A-orthogonal decomposition", orthogonal_decomposition);
  report(3, "uniform conditioning", uniform_conditioning);
  report(4, "error decay", error_decay);
  report(5, "oracle equivalence", oracle_equivalence);
  report(6, "gamblet and stiffness decay", basis_decay);
  report(7, "fast-solve accuracy", [&] { return fast_accuracy(C_a); });
  report(8, "localized conditioning", [&] { return localized_conditioning(C_a); });
  report(9, "near-linear growth", [&] { return growth(C_a); }, false);
  report(10, "Poincare fit", poincare_fit);
  report(11, "posterior monotonicity", posterior_monotone);
  report(12, "micro-example", micro_example);
  fmt::print("{} gating criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
