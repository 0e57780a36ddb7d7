#include "gamblet/gamblet_exact.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "gamblet/error.hpp"
#include "gamblet/matrix_market.hpp"

namespace gamblet {

namespace {

// Dense intermediates (D = B^{-1} Z, R) above this many entries are refused.
constexpr Index kExactEntryCap = Index{1} << 24;

std::shared_ptr<const SpdSolver> make_solver(const SparseMatrix& m, const SolverPolicy& policy, Index rhs,
                                             int level) {
  try {
    return std::make_shared<const SpdSolver>(m, policy, rhs);
  } catch (const NotSpdError& e) {
    throw SolveError(level, 0.0, e.what());
  }
}

double density(const SparseMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  return static_cast<double>(m.nnz()) / (static_cast<double>(m.rows()) * static_cast<double>(m.cols()));
}

// (M + M^T) / 2 with exact zeros dropped.
SparseMatrix symmetric_from_dense(DenseMatrix m) {
  m = 0.5 * (m + m.transpose()).eval();
  return SparseMatrix::from_dense(m).with_symmetry_flag(0.0);
}

}  // namespace

Vector GambletHierarchy::prolong(int k, std::span<const double> x) const {
  if (k < 1 || k > q) throw ContractError("prolong: level out of range");
  if (static_cast<Index>(x.size()) != level_size(k)) throw ContractError("prolong: length mismatch");
  Vector y(x.begin(), x.end());
  for (int m = k + 1; m <= q; ++m) y = spmv_transpose(R[m], y);
  return y;
}

Vector GambletHierarchy::restrict_to(int k, std::span<const double> b) const {
  if (k < 1 || k > q) throw ContractError("restrict_to: level out of range");
  if (static_cast<Index>(b.size()) != level_size(q)) throw ContractError("restrict_to: length mismatch");
  Vector y(b.begin(), b.end());
  for (int m = q; m > k; --m) y = spmv(R[m], y);
  return y;
}

GambletHierarchy gamblet_transform(const SparseMatrix& a, const HierarchyOperators& ops,
                                   const TransformOptions& opts) {
  const int q = ops.depth();
  if (q < 1) throw StructureError("gamblet_transform: empty hierarchy");
  if (a.rows() != a.cols()) throw ContractError("gamblet_transform: A must be square");
  if (a.rows() != ops.level_size(q))
    throw StructureError("gamblet_transform: A has " + std::to_string(a.rows()) + " rows but the tree has " +
                         std::to_string(ops.level_size(q)) + " leaves");
  if (!a.symmetric() && !a.is_symmetric()) throw ContractError("gamblet_transform: A is not symmetric");
  if (static_cast<int>(ops.pi.size()) < q || static_cast<int>(ops.W.size()) < q + 1)
    throw StructureError("gamblet_transform: operators are missing levels");

  GambletHierarchy h;
  const auto levels = static_cast<std::size_t>(q) + 1;
  h.q = q;
  h.A.resize(levels);
  h.B.resize(levels);
  h.R.resize(levels);
  h.N.resize(levels);
  h.Psi.resize(levels);
  h.Chi.resize(levels);
  h.pibar.resize(levels);
  h.solver.resize(levels);
  h.has_basis = opts.store_basis;
  h.A[q] = a.symmetric() ? a : a.symmetrized();
  if (opts.store_basis) h.Psi[q] = SparseMatrix::identity(a.rows());

  for (int k = 1; k < q; ++k) {
    const SparseMatrix& p = ops.pi[k];
    if (p.rows() != ops.level_size(k) || p.cols() != ops.level_size(k + 1))
      throw StructureError("gamblet_transform: pi at level " + std::to_string(k) + " has wrong shape");
    h.pibar[k] = pseudo_inverse_pi(p);
  }

  for (int k = q; k >= 2; --k) {
    const SparseMatrix& w = ops.W[k];
    const SparseMatrix& ak = h.A[k];
    const Index nk = ak.rows();
    const Index nc = ops.level_size(k - 1);
    if (w.cols() != nk) throw StructureError("gamblet_transform: W at level " + std::to_string(k) + " has wrong shape");
    if (w.rows() * nc > kExactEntryCap || nc * nk > kExactEntryCap)
      throw CapacityError("gamblet_transform: level " + std::to_string(k) + " is too large for exact mode");

    const SparseMatrix wa = multiply(w, ak);
    h.B[k] = multiply(wa, w.transpose()).symmetrized();
    h.solver[k] = make_solver(h.B[k], opts.solver, nc, k);

    // D = B^{-1} W A pibar^T, R = pibar - D^T W.
    const DenseMatrix z = multiply(wa, h.pibar[k - 1].transpose()).to_dense();
    const DenseMatrix d = h.solver[k]->solve(z, k);
    DenseMatrix r = h.pibar[k - 1].to_dense();
    r -= multiply(DenseMatrix(d.transpose()), w);
    h.R[k] = SparseMatrix::from_dense(r);

    if (density(h.R[k]) > 0.05) {
      const DenseMatrix ra = multiply(r, ak);
      h.A[k - 1] = symmetric_from_dense(ra * r.transpose());
    } else {
      h.A[k - 1] = triple_product(h.R[k], ak).symmetrized();
    }

    if (opts.store_basis) {
      // N = A W^T B^{-1} = (B^{-1} W A)^T.
      const DenseMatrix nt = h.solver[k]->solve(wa.to_dense(), k);
      h.N[k] = SparseMatrix::from_dense(nt.transpose());
      h.Chi[k] = multiply(w, h.Psi[k]);
      h.Psi[k - 1] = multiply(h.R[k], h.Psi[k]);
    }
  }
  h.solver[1] = make_solver(h.A[1], opts.solver, 1, 1);
  return h;
}

SubbandSolution gamblet_solve(const GambletHierarchy& h, const HierarchyOperators& ops, std::span<const double> b) {
  const int q = h.q;
  if (q < 1) throw ContractError("gamblet_solve: empty hierarchy");
  if (static_cast<Index>(b.size()) != h.level_size(q))
    throw ContractError("gamblet_solve: rhs has length " + std::to_string(b.size()) + ", expected " +
                        std::to_string(h.level_size(q)));
  if (ops.depth() != q) throw StructureError("gamblet_solve: operators do not match the hierarchy");
  require_finite(b, "gamblet_solve rhs");
  SubbandSolution s;
  const auto levels = static_cast<std::size_t>(q) + 1;
  s.q = q;
  s.v.resize(levels);
  s.w.resize(levels);
  s.b.resize(levels);
  s.b[q].assign(b.begin(), b.end());
  for (int k = q; k >= 2; --k) {
    const SparseMatrix& w = ops.W[k];
    s.w[k] = h.solver[k]->solve(spmv(w, s.b[k]), k);
    s.b[k - 1] = spmv(h.R[k], s.b[k]);
    s.v[k] = h.prolong(k, spmv_transpose(w, s.w[k]));
  }
  s.w[1] = h.solver[1]->solve(s.b[1], 1);
  s.v[1] = h.prolong(1, s.w[1]);
  s.u = reconstruct(s);
  return s;
}

SubbandSolution decompose(const GambletHierarchy& h, const HierarchyOperators& ops, const SparseMatrix& a,
                          std::span<const double> u) {
  return gamblet_solve(h, ops, spmv(a, u));
}

Vector reconstruct(const SubbandSolution& s) {
  if (s.q < 1 || static_cast<int>(s.v.size()) < s.q + 1) throw ContractError("reconstruct: missing subbands");
  Vector u(s.v[1].size(), 0.0);
  for (int k = 1; k <= s.q; ++k) {
    if (s.v[k].size() != u.size()) throw ContractError("reconstruct: subband length mismatch");
    axpy(1.0, s.v[k], u);
  }
  return u;
}

Vector compressed_inverse_apply(const GambletHierarchy& h, int k, std::span<const double> b,
                                const SolverPolicy& policy) {
  if (k < 1 || k > h.q) throw ContractError("compressed_inverse_apply: level out of range");
  const Vector bk = h.restrict_to(k, b);
  Vector x;
  if (k == 1) {
    x = h.solver[1]->solve(bk, 1);
  } else {
    x = make_solver(h.A[k], policy, 1, k)->solve(bk, k);
  }
  return h.prolong(k, x);
}

DenseMatrix theta_matrix(const DenseMatrix& a, const DenseMatrix& phi) {
  if (a.rows() != a.cols() || phi.cols() != a.rows()) throw ContractError("theta_matrix: shape mismatch");
  if (a.rows() > kDenseCap) throw CapacityError("theta_matrix: above the dense cap");
  const DenseMatrix x = cholesky(a).solve(phi.transpose());
  DenseMatrix theta = phi * x;
  theta = 0.5 * (theta + theta.transpose()).eval();
  Eigen::LLT<DenseMatrix> llt(theta);
  const double scale = theta.diagonal().cwiseAbs().maxCoeff();
  if (llt.info() != Eigen::Success) throw RankError("theta_matrix: Phi A^{-1} Phi^T is singular");
  const Eigen::VectorXd l = DenseMatrix(llt.matrixL()).diagonal();
  if (l.size() > 0 && l.cwiseAbs2().minCoeff() < 1e-13 * scale)
    throw RankError("theta_matrix: Phi A^{-1} Phi^T is numerically singular");
  return theta;
}

DenseMatrix gamblet_oracle_all(const DenseMatrix& a, const DenseMatrix& phi) {
  const DenseMatrix theta = theta_matrix(a, phi);
  const DenseMatrix x = cholesky(a).solve(phi.transpose());
  return cholesky(theta).solve(DenseMatrix(x.transpose()));
}

Vector gamblet_oracle(const DenseMatrix& a, const DenseMatrix& phi, Index i) {
  if (i < 0 || i >= phi.rows()) throw ContractError("gamblet_oracle: index out of range");
  const DenseMatrix theta = theta_matrix(a, phi);
  const DenseMatrix x = cholesky(a).solve(phi.transpose());
  const Eigen::VectorXd c = cholesky(theta).solve(Eigen::VectorXd::Unit(phi.rows(), i));
  return to_vector(x * c);
}

void export_hierarchy(const std::filesystem::path& dir, const GambletHierarchy& h, const std::string& tag) {
  std::filesystem::create_directories(dir);
  const std::string pre = tag.empty() ? "" : tag + "_";
  nlohmann::json j;
  j["tag"] = tag;
  j["q"] = h.q;
  j["localized"] = h.localized;
  j["has_basis"] = h.has_basis;
  nlohmann::json levels = nlohmann::json::array();
  for (int k = 1; k <= h.q; ++k) {
    nlohmann::json l;
    l["level"] = k;
    l["size"] = h.level_size(k);
    l["nnz_A"] = h.A[k].nnz();
    mm_write(dir / (pre + "A_" + std::to_string(k) + ".mtx"), h.A[k]);
    if (k >= 2) {
      l["wavelet_size"] = h.B[k].rows();
      l["nnz_B"] = h.B[k].nnz();
      l["nnz_R"] = h.R[k].nnz();
      mm_write(dir / (pre + "B_" + std::to_string(k) + ".mtx"), h.B[k]);
      mm_write(dir / (pre + "R_" + std::to_string(k) + ".mtx"), h.R[k]);
    }
    if (h.has_basis) mm_write(dir / (pre + "Psi_" + std::to_string(k) + ".mtx"), h.Psi[k]);
    if (h.solver[k]) l["dense_solver"] = h.solver[k]->is_dense();
    levels.push_back(l);
  }
  j["levels"] = levels;
  std::ofstream os(dir / (pre + "manifest.json"));
  if (!os) throw Error("cannot write manifest in " + dir.string());
  os << j.dump(2) << "\n";
}

}  // namespace gamblet
