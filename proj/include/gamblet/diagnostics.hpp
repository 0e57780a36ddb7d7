#pragma once

// Measurements backing the method's conditioning, accuracy and decay claims.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gamblet/gamblet_exact.hpp"
#include "gamblet/gamblet_fast.hpp"
#include "gamblet/sparse.hpp"

namespace gamblet {

struct EigenBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double cond = 0.0;
  Index iterations = 0;
};

/// Extreme eigenvalues of an SPD matrix to relative tolerance `tol`.
/// Dense eigensolver up to 512 rows; above, Lanczos with full
/// reorthogonalization on M (largest) and on M^{-1} through CG (smallest).
/// Throws SolveError with the achieved residual on non-convergence.
EigenBounds extreme_eigs(const SparseMatrix& m, double tol = 1e-8);

/// cond(A^(1)) at index 1 and cond(B^(k)) at index k; index 0 unused.
std::vector<EigenBounds> level_conditioning(const GambletHierarchy& h, double tol = 1e-8);

struct Range {
  double low = 0.0;
  double high = 0.0;
};

/// Extremes of lambda_min(A) v^T A v / |A v|^2 over V^(1) (index 1) and W^(k)
/// (index k) by dense generalized eigensolves. Needs the stored basis.
std::vector<Range> eigen_ranges(const GambletHierarchy& h, const SparseMatrix& a);

/// |u - u^(k)|_A for k = 1..q (index 0 unused).
std::vector<double> error_curve(const GambletHierarchy& h, const HierarchyOperators& ops, std::span<const double> b);

struct SubbandEnergy {
  std::vector<double> energy;  // |v^(k)|_A^2
  std::vector<double> share;   // energy / |u|_A^2
  double total = 0.0;          // |u|_A^2
};

SubbandEnergy subband_energy(const SubbandSolution& s, const SparseMatrix& a);

struct PoincareConstants {
  /// inf over Img(pi^(q,k)) of sqrt(x^T A^{-1} x)/|x|, k = 1..q.
  std::vector<double> inf_image;
  /// sup over Ker(pi^(k,q)) of the same ratio, k = 1..q-1 (0 at k = q).
  std::vector<double> sup_kernel;
  /// Fitted H (common log-slope of both series against k) and the smallest C
  /// with C^{-1} H^k <= sqrt(lambda_min) inf_k and sqrt(lambda_min) sup_k <= C H^k.
  double H = 0.0;
  double C = 0.0;
  double lambda_min = 0.0;
};

PoincareConstants poincare_constants(const SparseMatrix& a, const HierarchyOperators& ops);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  Index points = 0;
};

/// OLS of log y against x over points with x >= 1 and y >= 1e-14.
LineFit log_linear_fit(const std::vector<std::pair<double, double>>& curve);

struct DecayProfile {
  std::vector<std::pair<double, double>> psi;        // (n, max |Psi^(k)_ij| with d(i, j^(k)) = n)
  std::vector<std::pair<double, double>> stiffness;  // (n, max |A^(k)_ij| with d(i, j) = n)
  LineFit psi_fit;
  LineFit stiffness_fit;
};

/// Profiles for row i at level dist.level(). Needs the stored basis.
DecayProfile decay_profile(const GambletHierarchy& h, const IndexTree& tree, const LevelGraphDistance& dist, Index i);

/// diag of (I - Psi^(k)^T pi^(k,q)) A^{-1}.
Vector posterior_cov_diag(const GambletHierarchy& h, const HierarchyOperators& ops, int k);

struct FastVsExact {
  std::vector<double> level_error;  // |v^(k) - v^(k),loc|_A, index 1..q
  double total = 0.0;               // |u - u^loc|_A
};

FastVsExact fast_vs_exact_report(const SubbandSolution& exact, const SubbandSolution& fast, const SparseMatrix& a);

/// Named metrics and curves with a short note per entry.
struct DiagnosticReport {
  std::map<std::string, double> metrics;
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  std::map<std::string, std::string> notes;

  void metric(const std::string& name, double value, const std::string& note = "");
  void curve(const std::string& name, std::vector<std::pair<double, double>> points, const std::string& note = "");
  /// Throws ContractError on non-finite values or empty curves.
  void validate() const;
  std::string to_json(int indent = 2) const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace gamblet
