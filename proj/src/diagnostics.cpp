#include "gamblet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "gamblet/error.hpp"
#include "gamblet/solvers.hpp"

namespace gamblet {

namespace {

constexpr Index kDenseEigLimit = 512;

struct RitzResult {
  double value = 0.0;
  double residual = 0.0;
  Index iters = 0;
  bool converged = false;
};

// Largest eigenvalue of a symmetric operator by Lanczos with full reorthogonalization.
RitzResult lanczos_largest(const LinearOperator& op, Index n, double tol, std::uint64_t seed) {
  const Index max_iter = std::min<Index>(n, 400);
  DenseMatrix basis(n, max_iter + 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  basis.col(0) = v / v.norm();
  std::vector<double> alpha;
  std::vector<double> beta;
  Eigen::VectorXd w(n);
  RitzResult res;
  for (Index j = 0; j < max_iter; ++j) {
    Eigen::VectorXd qj = basis.col(j);
    op(std::span<const double>(qj.data(), static_cast<std::size_t>(n)), std::span<double>(w.data(), static_cast<std::size_t>(n)));
    alpha.push_back(qj.dot(w));
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd c = basis.leftCols(j + 1).transpose() * w;
      w -= basis.leftCols(j + 1) * c;
    }
    const double b = w.norm();
    const Index m = j + 1;
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1)) : Eigen::VectorXd();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const double theta = tri.eigenvalues()(m - 1);
    const double resid = b * std::abs(tri.eigenvectors()(m - 1, m - 1));
    res = {theta, resid, m, false};
    if (resid <= tol * std::abs(theta) || b <= 1e-14 * std::abs(theta) || m == n) {
      res.converged = true;
      return res;
    }
    beta.push_back(b);
    basis.col(j + 1) = w / b;
  }
  return res;
}

double energy(const SparseMatrix& a, const Vector& x) {
  const double e = dot(x, spmv(a, x));
  return std::max(e, 0.0);
}

DenseMatrix dense_inverse(const SparseMatrix& a, const char* who) {
  if (a.rows() > kDenseCap) throw CapacityError(std::string(who) + ": above the dense cap");
  return cholesky(a.to_dense()).solve(DenseMatrix::Identity(a.rows(), a.rows()));
}

}  // namespace

EigenBounds extreme_eigs(const SparseMatrix& m, double tol) {
  if (m.rows() != m.cols()) throw ContractError("extreme_eigs: matrix must be square");
  if (m.rows() == 0) throw ContractError("extreme_eigs: empty matrix");
  if (!(tol > 0.0)) throw ContractError("extreme_eigs: tol must be positive");
  const Index n = m.rows();
  EigenBounds out;
  if (n <= kDenseEigLimit) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m.to_dense(), Eigen::EigenvaluesOnly);
    out.lambda_min = es.eigenvalues()(0);
    out.lambda_max = es.eigenvalues()(n - 1);
  } else {
    LinearOperator apply = [&](std::span<const double> x, std::span<double> y) {
      const Vector r = spmv(m, x);
      std::copy(r.begin(), r.end(), y.begin());
    };
    const RitzResult top = lanczos_largest(apply, n, tol, 12345);
    if (!top.converged) throw SolveError(0, top.residual, "extreme_eigs: Lanczos for lambda_max did not converge");
    CgOptions cg;
    cg.tol = std::min(1e-12, tol * 1e-3);
    LinearOperator inverse = [&](std::span<const double> x, std::span<double> y) {
      CgResult r = cg_solve(m, x, cg);
      if (!r.converged) throw SolveError(0, r.residual, "extreme_eigs: inner CG did not converge");
      std::copy(r.x.begin(), r.x.end(), y.begin());
    };
    const RitzResult bottom = lanczos_largest(inverse, n, tol, 54321);
    if (!bottom.converged)
      throw SolveError(0, bottom.residual, "extreme_eigs: Lanczos for lambda_min did not converge");
    out.lambda_max = top.value;
    out.lambda_min = 1.0 / bottom.value;
    out.iterations = top.iters + bottom.iters;
  }
  if (!(out.lambda_min > 0.0)) throw ContractError("extreme_eigs: matrix is not positive definite");
  out.cond = out.lambda_max / out.lambda_min;
  return out;
}

std::vector<EigenBounds> level_conditioning(const GambletHierarchy& h, double tol) {
  std::vector<EigenBounds> out(static_cast<std::size_t>(h.q) + 1);
  out[1] = extreme_eigs(h.A[1], tol);
  for (int k = 2; k <= h.q; ++k) out[k] = extreme_eigs(h.B[k], tol);
  return out;
}

std::vector<Range> eigen_ranges(const GambletHierarchy& h, const SparseMatrix& a) {
  if (!h.has_basis) throw ContractError("eigen_ranges: hierarchy was built without the basis");
  if (a.rows() > kDenseCap) throw CapacityError("eigen_ranges: above the dense cap");
  const double lmin = extreme_eigs(a).lambda_min;
  std::vector<Range> out(static_cast<std::size_t>(h.q) + 1);
  for (int k = 1; k <= h.q; ++k) {
    const SparseMatrix& x = k == 1 ? h.Psi[1] : h.Chi[k];
    if (x.rows() == 0) continue;
    const DenseMatrix axt = multiply(a, x.transpose()).to_dense();
    const DenseMatrix xd = x.to_dense();
    DenseMatrix num = xd * axt;
    num = 0.5 * (num + num.transpose()).eval();
    const DenseMatrix den = axt.transpose() * axt;
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> es(num, den, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw SolveError(k, 0.0, "eigen_ranges: generalized eigensolve failed");
    out[k] = {lmin * es.eigenvalues().minCoeff(), lmin * es.eigenvalues().maxCoeff()};
  }
  return out;
}

std::vector<double> error_curve(const GambletHierarchy& h, const HierarchyOperators& ops, std::span<const double> b) {
  const SubbandSolution s = gamblet_solve(h, ops, b);
  const SparseMatrix& a = h.A[h.q];
  std::vector<double> out(static_cast<std::size_t>(h.q) + 1, 0.0);
  Vector tail(s.u.size(), 0.0);
  for (int k = h.q; k >= 1; --k) {
    out[k] = std::sqrt(energy(a, tail));
    axpy(1.0, s.v[k], tail);
  }
  return out;
}

SubbandEnergy subband_energy(const SubbandSolution& s, const SparseMatrix& a) {
  SubbandEnergy e;
  e.energy.assign(static_cast<std::size_t>(s.q) + 1, 0.0);
  e.share.assign(static_cast<std::size_t>(s.q) + 1, 0.0);
  e.total = energy(a, s.u);
  for (int k = 1; k <= s.q; ++k) {
    e.energy[k] = energy(a, s.v[k]);
    e.share[k] = e.total > 0.0 ? e.energy[k] / e.total : 0.0;
  }
  return e;
}

PoincareConstants poincare_constants(const SparseMatrix& a, const HierarchyOperators& ops) {
  const int q = ops.depth();
  if (a.rows() != ops.level_size(q)) throw StructureError("poincare_constants: A does not match the tree");
  const DenseMatrix ainv = dense_inverse(a, "poincare_constants");
  const Index n = a.rows();
  PoincareConstants pc;
  pc.inf_image.assign(static_cast<std::size_t>(q) + 1, 0.0);
  pc.sup_kernel.assign(static_cast<std::size_t>(q) + 1, 0.0);
  pc.lambda_min = extreme_eigs(a).lambda_min;
  for (int k = 1; k <= q; ++k) {
    const DenseMatrix phi = measurement_matrix(ops, k).to_dense();
    const DenseMatrix g = phi * phi.transpose();
    DenseMatrix theta = phi * ainv * phi.transpose();
    theta = 0.5 * (theta + theta.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> es(theta, g, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    pc.inf_image[k] = std::sqrt(std::max(es.eigenvalues().minCoeff(), 0.0));
    if (k < q) {
      const DenseMatrix p = DenseMatrix::Identity(n, n) - phi.transpose() * cholesky(g).solve(phi);
      DenseMatrix m = p * ainv * p;
      m = 0.5 * (m + m.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<DenseMatrix> ks(m, Eigen::EigenvaluesOnly);
      pc.sup_kernel[k] = std::sqrt(std::max(ks.eigenvalues().maxCoeff(), 0.0));
    }
  }
  // Shared slope, separate intercepts.
  const double root = std::sqrt(pc.lambda_min);
  std::vector<std::vector<std::pair<double, double>>> series(2);
  for (int k = 1; k <= q; ++k) {
    if (pc.inf_image[k] > 0.0) series[0].push_back({k, std::log(root * pc.inf_image[k])});
    if (k < q && pc.sup_kernel[k] > 0.0) series[1].push_back({k, std::log(root * pc.sup_kernel[k])});
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& s : series) {
    if (s.size() < 2) continue;
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : s) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(s.size());
    my /= static_cast<double>(s.size());
    for (const auto& [x, y] : s) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
  }
  pc.H = sxx > 0.0 ? std::exp(sxy / sxx) : 0.0;
  if (pc.H > 0.0) {
    for (int k = 1; k <= q; ++k) {
      const double hk = std::pow(pc.H, k);
      if (pc.inf_image[k] > 0.0) pc.C = std::max(pc.C, hk / (root * pc.inf_image[k]));
      if (k < q) pc.C = std::max(pc.C, root * pc.sup_kernel[k] / hk);
    }
  }
  return pc;
}

LineFit log_linear_fit(const std::vector<std::pair<double, double>>& curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& [x, y] : curve)
    if (x >= 1.0 && y >= 1e-14) pts.push_back({x, std::log(y)});
  LineFit fit;
  fit.points = static_cast<Index>(pts.size());
  if (pts.size() < 2) return fit;
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? std::min(1.0, (sxy * sxy) / (sxx * syy)) : 1.0;
  return fit;
}

DecayProfile decay_profile(const GambletHierarchy& h, const IndexTree& tree, const LevelGraphDistance& dist, Index i) {
  const int k = dist.level();
  if (!h.has_basis) throw ContractError("decay_profile: hierarchy was built without the basis");
  if (k < 1 || k > h.q || dist.size() != h.level_size(k)) throw ContractError("decay_profile: level mismatch");
  const auto d = dist.distances_from(i);
  Index maxd = 0;
  for (Index x : d)
    if (x != LevelGraphDistance::kInfinity) maxd = std::max(maxd, x);
  std::vector<double> psi(static_cast<std::size_t>(maxd) + 1, 0.0);
  std::vector<double> stiff(static_cast<std::size_t>(maxd) + 1, 0.0);
  const auto anc = tree.ancestors(h.q, k);
  const auto pc = h.Psi[k].row_cols(i);
  const auto pv = h.Psi[k].row_values(i);
  for (std::size_t s = 0; s < pc.size(); ++s) {
    const Index n = d[anc[pc[s]]];
    if (n != LevelGraphDistance::kInfinity) psi[n] = std::max(psi[n], std::abs(pv[s]));
  }
  const auto ac = h.A[k].row_cols(i);
  const auto av = h.A[k].row_values(i);
  for (std::size_t s = 0; s < ac.size(); ++s) {
    const Index n = d[ac[s]];
    if (n != LevelGraphDistance::kInfinity) stiff[n] = std::max(stiff[n], std::abs(av[s]));
  }
  DecayProfile p;
  for (Index n = 0; n <= maxd; ++n) {
    p.psi.push_back({static_cast<double>(n), psi[n]});
    p.stiffness.push_back({static_cast<double>(n), stiff[n]});
  }
  p.psi_fit = log_linear_fit(p.psi);
  p.stiffness_fit = log_linear_fit(p.stiffness);
  return p;
}

Vector posterior_cov_diag(const GambletHierarchy& h, const HierarchyOperators& ops, int k) {
  if (!h.has_basis) throw ContractError("posterior_cov_diag: hierarchy was built without the basis");
  if (k < 1 || k > h.q) throw ContractError("posterior_cov_diag: level out of range");
  const DenseMatrix ainv = dense_inverse(h.A[h.q], "posterior_cov_diag");
  const DenseMatrix phi_q = measurement_matrix(ops, k).to_dense() * ainv;
  const DenseMatrix psi = h.Psi[k].to_dense();
  Vector out(static_cast<std::size_t>(ainv.rows()));
  for (Index j = 0; j < ainv.rows(); ++j) out[j] = ainv(j, j) - psi.col(j).dot(phi_q.col(j));
  return out;
}

FastVsExact fast_vs_exact_report(const SubbandSolution& exact, const SubbandSolution& fast, const SparseMatrix& a) {
  if (exact.q != fast.q || exact.u.size() != fast.u.size() || static_cast<Index>(exact.u.size()) != a.rows())
    throw ContractError("fast_vs_exact_report: shape mismatch");
  FastVsExact r;
  r.level_error.assign(static_cast<std::size_t>(exact.q) + 1, 0.0);
  for (int k = 1; k <= exact.q; ++k) {
    if (exact.v[k].size() != fast.v[k].size()) throw ContractError("fast_vs_exact_report: subband shape mismatch");
    r.level_error[k] = std::sqrt(energy(a, add(exact.v[k], fast.v[k], 1.0, -1.0)));
  }
  r.total = std::sqrt(energy(a, add(exact.u, fast.u, 1.0, -1.0)));
  return r;
}

void DiagnosticReport::metric(const std::string& name, double value, const std::string& note) {
  metrics[name] = value;
  if (!note.empty()) notes[name] = note;
}

void DiagnosticReport::curve(const std::string& name, std::vector<std::pair<double, double>> points,
                             const std::string& note) {
  curves[name] = std::move(points);
  if (!note.empty()) notes[name] = note;
}

void DiagnosticReport::validate() const {
  for (const auto& [name, v] : metrics)
    if (!std::isfinite(v)) throw ContractError("report metric '" + name + "' is not finite");
  for (const auto& [name, c] : curves) {
    if (c.empty()) throw ContractError("report curve '" + name + "' is empty");
    for (const auto& [x, y] : c)
      if (!std::isfinite(x) || !std::isfinite(y)) throw ContractError("report curve '" + name + "' is not finite");
  }
}

std::string DiagnosticReport::to_json(int indent) const {
  validate();
  nlohmann::json j;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  j["curves"] = nlohmann::json::object();
  for (const auto& [k, c] : curves) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [x, y] : c) arr.push_back({x, y});
    j["curves"][k] = arr;
  }
  j["notes"] = notes;
  return j.dump(indent);
}

void DiagnosticReport::write(const std::filesystem::path& path) const {
  const std::string text = to_json();
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << text << "\n";
}

}  // namespace gamblet
