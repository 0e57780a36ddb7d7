#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gamblet/diagnostics.hpp"
#include "gamblet/error.hpp"
#include "gamblet/gamblet_exact.hpp"
#include "gamblet/gamblet_fast.hpp"
#include "gamblet/hierarchy.hpp"
#include "gamblet/matrix_market.hpp"
#include "gamblet/problems.hpp"
#include "gamblet/solvers.hpp"

#ifndef GAMBLET_DATA_DIR
#define GAMBLET_DATA_DIR "data"
#endif

namespace gamblet::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Every randomized probe in the library uses fixed seeds; recorded for reproducibility.
constexpr std::uint64_t kSeed = 20240101;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path default_out_dir() {
  if (const char* env = std::getenv("GAMBLET_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

json envelope(const std::string& command, json config) {
  json j;
  j["command"] = command;
  j["version"] = GAMBLET_VERSION;
  j["seed"] = kSeed;
  j["threads"] = thread_count();
  j["config"] = std::move(config);
  return j;
}

json error_json(const std::exception& e) {
  json j;
  j["message"] = e.what();
  if (const auto* s = dynamic_cast<const SolveError*>(&e)) {
    j["type"] = "SolveError";
    j["level"] = s->level();
    j["residual"] = s->residual();
  } else if (dynamic_cast<const CapacityError*>(&e)) {
    j["type"] = "CapacityError";
  } else if (dynamic_cast<const StructureError*>(&e)) {
    j["type"] = "StructureError";
  } else if (dynamic_cast<const ParseError*>(&e)) {
    j["type"] = "ParseError";
  } else if (dynamic_cast<const ContractError*>(&e)) {
    j["type"] = "ContractError";
  } else {
    j["type"] = "Error";
  }
  return j;
}

std::vector<Edge> read_edges(const fs::path& path, Index& nodes) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  Index maxnode = -1;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Edge e{};
    if (!(ls >> e.a)) continue;
    if (!(ls >> e.b)) throw ParseError(path.string(), lineno, "expected 'a b [weight]'");
    if (!(ls >> e.weight)) e.weight = 1.0;
    if (e.a < 0 || e.b < 0) throw ParseError(path.string(), lineno, "negative node index");
    maxnode = std::max({maxnode, e.a, e.b});
    edges.push_back(e);
  }
  if (nodes <= 0) nodes = maxnode + 1;
  if (maxnode >= nodes) throw ContractError("edge list references node " + std::to_string(maxnode) +
                                            " but --nodes is " + std::to_string(nodes));
  return edges;
}

// ---------------------------------------------------------------------------
// Problem setup shared by solve and diagnose.

struct Setup {
  SparseMatrix a;
  HierarchyOperators ops;
  json problem;
  std::string kind = "matrix";
  double d = 2.0;
  int fem_q = 0;
};

Setup load_setup(const fs::path& matrix, const std::string& problem_path) {
  Setup s;
  s.a = mm_read(matrix).with_symmetry_flag(1e-12);
  fs::path pj = problem_path.empty() ? matrix.parent_path() / "problem.json" : fs::path(problem_path);
  if (fs::exists(pj)) {
    s.problem = read_json(pj);
    s.kind = s.problem.value("kind", "matrix");
  }
  if (s.kind == "fem2d") {
    s.fem_q = s.problem.at("q").get<int>();
    if (s.a.rows() != (Index{1} << (2 * s.fem_q)))
      throw StructureError("matrix has " + std::to_string(s.a.rows()) + " rows, problem.json expects q=" +
                           std::to_string(s.fem_q));
    s.ops = fem_operators(s.fem_q);
    s.d = 2.0;
  } else {
    s.ops = make_haar_operators(aggregation_tree(s.a));
    const LevelGraphDistance finest(s.a, s.ops.tree, s.ops.depth());
    s.d = std::max(1.0, ball_growth_exponent(finest));
  }
  return s;
}

LocalizationSchedule make_schedule(const Setup& s, double H, double eps, double ca, Index rho) {
  const int q = s.ops.depth();
  return rho >= 0 ? uniform_schedule(H, q, eps, ca, rho, s.d) : default_schedule(H, q, eps, ca, s.d);
}

json schedule_json(const LocalizationSchedule& sc) {
  json j;
  j["H"] = sc.H;
  j["epsilon"] = sc.epsilon;
  j["C_a"] = sc.C_a;
  j["d"] = sc.d;
  j["rho"] = json::array();
  j["subband_tol"] = json::array();
  j["ball_tol"] = json::array();
  for (int k = 1; k <= sc.depth(); ++k) {
    j["rho"].push_back(sc.rho[k]);
    if (k >= 2) {
      j["subband_tol"].push_back(sc.subband_tol[k]);
      j["ball_tol"].push_back(sc.ball_tol[k]);
    }
  }
  j["coarse_tol"] = sc.coarse_tol;
  return j;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string kind;
  int q = -1;
  std::string out;
  std::string edges;
  Index nodes = 0;
  double reg = 0.0;
  int factors = 7;
  double amplitude = 0.2;
};

int cmd_gen(const GenArgs& g, std::ostream& out) {
  if (g.kind != "fem2d" && g.kind != "graph") throw UsageError("--kind must be fem2d or graph");
  const fs::path dir = g.out.empty() ? default_out_dir() : fs::path(g.out);
  json cfg{{"kind", g.kind}, {"out", dir.string()}};
  json pj;
  if (g.kind == "fem2d") {
    if (g.q < 0) throw UsageError("gen-problem --kind fem2d requires --q");
    if (g.q < 1 || g.q > 12) throw UsageError("--q must lie in 1..12");
    cfg["q"] = g.q;
    cfg["factors"] = g.factors;
    cfg["amplitude"] = g.amplitude;
    const GridProblem p = assemble_fem(g.q, CoefficientOptions{g.factors, g.amplitude});
    fs::create_directories(dir);
    mm_write(dir / "A.mtx", p.A);
    mm_write_vector(dir / "b_smooth.mtx", rhs_smooth(p));
    mm_write_vector(dir / "b_dirac.mtx", rhs_dirac(p));
    mm_write_vector(dir / "coeff.mtx", p.coeff);
    pj = envelope("gen-problem", cfg);
    pj["kind"] = "fem2d";
    pj["q"] = g.q;
    pj["side"] = p.side;
    pj["h"] = p.h;
    pj["n"] = p.size();
    pj["nnz"] = p.A.nnz();
    pj["coeff_min"] = p.coeff_min();
    pj["coeff_max"] = p.coeff_max();
    pj["contrast"] = p.coeff_max() / p.coeff_min();
    pj["ordering"] = "row-major";
    pj["files"] = {"A.mtx", "b_smooth.mtx", "b_dirac.mtx", "coeff.mtx"};
    out << "fem2d q=" << g.q << ": " << p.size() << " unknowns, " << p.A.nnz() << " nonzeros -> " << dir.string()
        << "\n";
  } else {
    if (g.edges.empty()) throw UsageError("gen-problem --kind graph requires --edges");
    if (g.reg < 0.0) throw UsageError("--reg must be nonnegative");
    Index nodes = g.nodes;
    const auto edges = read_edges(g.edges, nodes);
    cfg["edges"] = g.edges;
    cfg["nodes"] = nodes;
    cfg["reg"] = g.reg;
    const SparseMatrix a = graph_laplacian(nodes, edges, g.reg);
    fs::create_directories(dir);
    mm_write(dir / "A.mtx", a);
    mm_write_vector(dir / "b_smooth.mtx", Vector(static_cast<std::size_t>(nodes), 1.0));
    Vector dirac(static_cast<std::size_t>(nodes), 0.0);
    if (nodes > 0) dirac[0] = 1.0;
    mm_write_vector(dir / "b_dirac.mtx", dirac);
    pj = envelope("gen-problem", cfg);
    pj["kind"] = "graph";
    pj["n"] = nodes;
    pj["nnz"] = a.nnz();
    pj["edges"] = edges.size();
    pj["files"] = {"A.mtx", "b_smooth.mtx", "b_dirac.mtx"};
    out << "graph: " << nodes << " nodes, " << edges.size() << " edges -> " << dir.string() << "\n";
  }
  write_json(dir / "problem.json", pj);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string matrix;
  std::string rhs;
  std::string problem;
  std::string mode = "exact";
  std::string out;
  double H = 0.5;
  double epsilon = 1e-3;
  double C_a = -1.0;
  Index rho = -1;
};

int cmd_solve(const SolveArgs& a, std::ostream& out, std::ostream& err) {
  if (a.mode != "exact" && a.mode != "fast") throw UsageError("--mode must be exact or fast");
  if (!(a.H > 0.0 && a.H < 1.0)) throw UsageError("--H must lie in (0, 1)");
  const fs::path dir = a.out.empty() ? default_out_dir() : fs::path(a.out);
  const double ca = a.C_a > 0.0 ? a.C_a : calibrated_C_a();
  json cfg{{"matrix", a.matrix}, {"rhs", a.rhs},   {"problem", a.problem}, {"mode", a.mode},
           {"out", dir.string()}, {"H", a.H},      {"epsilon", a.epsilon}, {"C_a", ca},
           {"rho", a.rho}};
  json manifest = envelope("solve", cfg);
  manifest["mode"] = a.mode;
  fs::create_directories(dir);
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const Setup s = load_setup(a.matrix, a.problem);
    Vector b;
    if (a.rhs.empty()) {
      if (s.kind != "fem2d") throw UsageError("--rhs is required unless problem.json describes a fem2d problem");
      b = rhs_smooth(assemble_fem(s.fem_q));
    } else {
      b = mm_read_vector(a.rhs);
    }
    manifest["problem_kind"] = s.kind;
    manifest["n"] = s.a.rows();
    manifest["depth"] = s.ops.depth();
    SubbandSolution sol;
    json levels = json::array();
    if (a.mode == "exact") {
      const auto t1 = std::chrono::steady_clock::now();
      const GambletHierarchy h = gamblet_transform(s.a, s.ops, TransformOptions{{}, false});
      manifest["timings"]["transform"] = seconds_since(t1);
      const auto t2 = std::chrono::steady_clock::now();
      sol = gamblet_solve(h, s.ops, b);
      manifest["timings"]["solve"] = seconds_since(t2);
      for (int k = 1; k <= h.q; ++k) {
        json l{{"level", k}, {"size", h.level_size(k)}, {"nnz_A", h.A[k].nnz()}};
        if (k >= 2) {
          l["nnz_B"] = h.B[k].nnz();
          l["nnz_R"] = h.R[k].nnz();
        }
        levels.push_back(l);
      }
      manifest["inner_tol"] = SolverPolicy{}.cg.tol;
    } else {
      const LocalizationSchedule sc = make_schedule(s, a.H, a.epsilon, ca, a.rho);
      manifest["schedule"] = schedule_json(sc);
      const FastResult r = fast_gamblet_solve(s.a, s.ops, b, sc);
      manifest["timings"]["transform"] = r.transform_seconds;
      manifest["timings"]["solve"] = r.solve_seconds;
      manifest["total_nnz"] = r.total_nnz();
      for (const auto& st : r.stats)
        levels.push_back({{"level", st.level},
                          {"size", st.size},
                          {"nnz_A", st.nnz_A},
                          {"nnz_B", st.nnz_B},
                          {"nnz_R", st.nnz_R},
                          {"rho_inv", st.rho_inv},
                          {"rho_trun", st.rho_trun},
                          {"dense_solver", st.dense_solver}});
      sol = r.solution;
    }
    manifest["levels"] = levels;
    const Vector res = add(b, spmv(s.a, sol.u), 1.0, -1.0);
    const double bn = norm2(b);
    manifest["residual"] = bn > 0.0 ? norm2(res) / bn : norm2(res);
    mm_write_vector(dir / "u.mtx", sol.u);
    fs::create_directories(dir / "subbands");
    for (int k = 1; k <= sol.q; ++k) mm_write_vector(dir / "subbands" / ("v_" + std::to_string(k) + ".mtx"), sol.v[k]);
    manifest["timings"]["total"] = seconds_since(t0);
    manifest["status"] = "ok";
    write_json(dir / "manifest.json", manifest);
    out << a.mode << " solve: n=" << s.a.rows() << " depth=" << s.ops.depth()
        << " residual=" << manifest["residual"].get<double>() << " -> " << dir.string() << "\n";
    return kExitOk;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    manifest["status"] = "error";
    manifest["error"] = error_json(e);
    write_json(dir / "manifest.json", manifest);
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string matrix;
  std::string problem;
  std::string rhs;
  std::string checks;
  std::string out;
};

const std::vector<std::string> kChecks = {"conditioning", "decay", "energy", "poincare", "posterior"};

void check_conditioning(DiagnosticReport& r, const GambletHierarchy& h) {
  const auto c = level_conditioning(h);
  r.metric("cond_A_1", c[1].cond, "condition number of A^(1)");
  double lo = c[1].cond;
  double hi = c[1].cond;
  for (int k = 2; k <= h.q; ++k) {
    r.metric("cond_B_" + std::to_string(k), c[k].cond);
    if (k == 2) lo = hi = c[k].cond;
    lo = std::min(lo, c[k].cond);
    hi = std::max(hi, c[k].cond);
  }
  if (h.q >= 2) r.metric("cond_B_spread", hi / lo, "max_k / min_k of cond(B^(k))");
}

void check_decay(DiagnosticReport& r, const GambletHierarchy& h, const Setup& s) {
  for (int k = 2; k < h.q; ++k) {
    const LevelGraphDistance dist(s.a, s.ops.tree, k);
    Index centre = h.level_size(k) / 2;
    if (s.kind == "fem2d") {
      // Cell containing the grid centre.
      centre = s.ops.tree.ancestor(h.q, dirac_index(s.fem_q), k);
    }
    const DecayProfile p = decay_profile(h, s.ops.tree, dist, centre);
    const std::string tag = "_" + std::to_string(k);
    r.curve("psi_decay" + tag, p.psi, "max |Psi_ij| at level-graph distance n from the centre cell");
    r.curve("stiffness_decay" + tag, p.stiffness);
    r.metric("decay_psi_slope" + tag, p.psi_fit.slope);
    r.metric("decay_psi_r2" + tag, p.psi_fit.r2);
    r.metric("decay_stiffness_slope" + tag, p.stiffness_fit.slope);
    r.metric("decay_stiffness_r2" + tag, p.stiffness_fit.r2);
  }
}

void check_energy(DiagnosticReport& r, const GambletHierarchy& h, const Setup& s, const Vector& b) {
  const SubbandSolution sol = gamblet_solve(h, s.ops, b);
  const SubbandEnergy e = subband_energy(sol, s.a);
  std::vector<std::pair<double, double>> shares;
  for (int k = 1; k <= h.q; ++k) {
    r.metric("energy_share_" + std::to_string(k), e.share[k]);
    shares.push_back({static_cast<double>(k), e.share[k]});
  }
  r.metric("energy_total", e.total, "|u|_A^2");
  r.curve("energy_share", shares);
  const auto curve = error_curve(h, s.ops, b);
  std::vector<std::pair<double, double>> pts;
  for (int k = 1; k <= h.q; ++k) pts.push_back({static_cast<double>(k), curve[k]});
  r.curve("error_curve", pts, "|u - u^(k)|_A");
}

void check_poincare(DiagnosticReport& r, const Setup& s) {
  const PoincareConstants pc = poincare_constants(s.a, s.ops);
  r.metric("poincare_H", pc.H, "shared log-slope of both Poincare series");
  r.metric("poincare_C", pc.C);
  std::vector<std::pair<double, double>> inf;
  std::vector<std::pair<double, double>> sup;
  for (int k = 1; k <= s.ops.depth(); ++k) {
    inf.push_back({static_cast<double>(k), pc.inf_image[k]});
    if (k < s.ops.depth()) sup.push_back({static_cast<double>(k), pc.sup_kernel[k]});
  }
  r.curve("poincare_inf_image", inf);
  if (!sup.empty()) r.curve("poincare_sup_kernel", sup);
}

void check_posterior(DiagnosticReport& r, const GambletHierarchy& h, const HierarchyOperators& ops) {
  std::vector<std::pair<double, double>> trace;
  Vector prev;
  double worst_increase = 0.0;
  for (int k = 1; k <= h.q; ++k) {
    const Vector g = posterior_cov_diag(h, ops, k);
    double t = 0.0;
    for (double x : g) t += x;
    trace.push_back({static_cast<double>(k), t});
    if (!prev.empty())
      for (std::size_t i = 0; i < g.size(); ++i) worst_increase = std::max(worst_increase, g[i] - prev[i]);
    prev = g;
  }
  r.curve("posterior_trace", trace, "trace of the level-k posterior covariance");
  r.metric("posterior_max_increase", worst_increase, "largest entrywise increase of diag between levels");
  r.metric("posterior_final_max", max_abs(prev));
}

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const auto checks = split_list(a.checks);
  if (checks.empty()) throw UsageError("--checks must name at least one of conditioning,decay,energy,poincare,posterior");
  for (const auto& c : checks)
    if (std::find(kChecks.begin(), kChecks.end(), c) == kChecks.end()) throw UsageError("unknown check '" + c + "'");
  const fs::path path = a.out.empty() ? default_out_dir() / "report.json" : fs::path(a.out);
  const Setup s = load_setup(a.matrix, a.problem);
  const bool needs_basis = std::find(checks.begin(), checks.end(), "decay") != checks.end() ||
                           std::find(checks.begin(), checks.end(), "posterior") != checks.end();
  const GambletHierarchy h = gamblet_transform(s.a, s.ops, TransformOptions{{}, needs_basis});
  DiagnosticReport r;
  for (const auto& c : checks) {
    if (c == "conditioning") {
      check_conditioning(r, h);
    } else if (c == "decay") {
      check_decay(r, h, s);
    } else if (c == "energy") {
      Vector b;
      if (!a.rhs.empty())
        b = mm_read_vector(a.rhs);
      else if (s.kind == "fem2d")
        b = rhs_smooth(assemble_fem(s.fem_q));
      else
        b.assign(static_cast<std::size_t>(s.a.rows()), 1.0);
      check_energy(r, h, s, b);
    } else if (c == "poincare") {
      check_poincare(r, s);
    } else {
      check_posterior(r, h, s.ops);
    }
  }
  json j = json::parse(r.to_json());
  j["version"] = GAMBLET_VERSION;
  j["seed"] = kSeed;
  j["config"] = {{"matrix", a.matrix}, {"problem", a.problem}, {"rhs", a.rhs}, {"checks", checks}};
  write_json(path, j);
  out << "diagnose: " << r.metrics.size() << " metrics, " << r.curves.size() << " curves -> " << path.string()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  int q = 4;
  std::string epsilons = "1e-2,1e-3";
  double start = 0.25;
  int doublings = 6;
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  if (a.q < 2 || a.q > 8) throw UsageError("--q must lie in 2..8");
  if (a.start <= 0.0) throw UsageError("--start must be positive");
  std::vector<double> eps;
  for (const auto& e : split_list(a.epsilons)) {
    try {
      eps.push_back(std::stod(e));
    } catch (const std::exception&) {
      throw UsageError("bad epsilon '" + e + "'");
    }
  }
  if (eps.empty()) throw UsageError("--epsilon needs at least one value");
  const GridProblem p = assemble_fem(a.q);
  const HierarchyOperators ops = fem_operators(a.q);
  const Vector g = rhs_smooth(p);
  const CgResult ref = cg_solve(p.A, g, CgOptions{1e-14, 100000, false});
  const double scale = energy_norm(p.A, ref.x);
  json history = json::array();
  double found = -1.0;
  double ca = a.start;
  for (int step = 0; step <= a.doublings && found < 0.0; ++step, ca *= 2.0) {
    bool ok = true;
    for (double e : eps) {
      const FastResult r = fast_gamblet_solve(p.A, ops, g, default_schedule(0.5, a.q, e, ca));
      const double rel = energy_norm(p.A, add(ref.x, r.solution.u, 1.0, -1.0)) / scale;
      history.push_back({{"C_a", ca}, {"epsilon", e}, {"relative_error", rel}, {"pass", rel <= e}});
      out << "C_a=" << ca << " eps=" << e << " relative error " << rel << (rel <= e ? " ok" : " miss") << "\n";
      ok = ok && rel <= e;
    }
    if (ok) found = ca;
  }
  json j = envelope("calibrate", {{"q", a.q}, {"epsilon", eps}, {"start", a.start}, {"doublings", a.doublings}});
  j["history"] = history;
  j["C_a"] = found > 0.0 ? json(found) : json(nullptr);
  if (!a.out.empty()) write_json(a.out, j);
  if (found < 0.0) return kExitFailure;
  out << "calibrated C_a = " << found << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string qs = "5,6";
  double epsilon = 1e-3;
  double C_a = -1.0;
  std::string out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const double ca = a.C_a > 0.0 ? a.C_a : calibrated_C_a();
  std::vector<int> qs;
  for (const auto& s : split_list(a.qs)) {
    try {
      qs.push_back(std::stoi(s));
    } catch (const std::exception&) {
      throw UsageError("bad q '" + s + "'");
    }
  }
  if (qs.size() < 2) throw UsageError("--q-list needs at least two sizes");
  json runs = json::array();
  std::vector<std::pair<double, double>> tpts;
  std::vector<std::pair<double, double>> npts;
  for (int q : qs) {
    if (q < 2 || q > 9) throw UsageError("q must lie in 2..9");
    const GridProblem p = assemble_fem(q);
    const HierarchyOperators ops = fem_operators(q);
    const auto t0 = std::chrono::steady_clock::now();
    const FastResult r = fast_gamblet_solve(p.A, ops, rhs_smooth(p), default_schedule(0.5, q, a.epsilon, ca));
    const double t = seconds_since(t0);
    runs.push_back({{"q", q}, {"n", p.size()}, {"seconds", t}, {"nnz", r.total_nnz()}});
    tpts.push_back({std::log(static_cast<double>(p.size())), std::log(t)});
    npts.push_back({std::log(static_cast<double>(p.size())), std::log(static_cast<double>(r.total_nnz()))});
    out << "q=" << q << " n=" << p.size() << " time=" << t << "s nnz=" << r.total_nnz() << "\n";
  }
  auto slope = [](const std::vector<std::pair<double, double>>& pts) {
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& [x, y] : pts) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
    return sxy / sxx;
  };
  json j = envelope("bench", {{"q_list", qs}, {"epsilon", a.epsilon}, {"C_a", ca}});
  j["runs"] = runs;
  j["time_exponent"] = slope(tpts);
  j["nnz_exponent"] = slope(npts);
  out << "fitted exponents: time " << j["time_exponent"].get<double>() << ", nnz "
      << j["nnz_exponent"].get<double>() << "\n";
  if (!a.out.empty()) write_json(a.out, j);
  return kExitOk;
}

}  // namespace

double calibrated_C_a() {
  const fs::path path = fs::path(GAMBLET_DATA_DIR) / "calibration.json";
  std::error_code ec;
  if (!fs::exists(path, ec)) return 0.5;
  try {
    const json j = read_json(path);
    return j.at("C_a").get<double>();
  } catch (const std::exception&) {
    return 0.5;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gamblet transform and solve", "gamblet"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for data-parallel loops")->check(CLI::Range(1, 256));
  app.set_version_flag("--version", std::string(GAMBLET_VERSION));

  GenArgs gen;
  auto* g = app.add_subcommand("gen-problem", "write a test problem (A.mtx, right-hand sides, problem.json)");
  g->add_option("--kind", gen.kind, "fem2d or graph")->required();
  g->add_option("--q", gen.q, "levels; the grid has 2^q x 2^q interior nodes");
  g->add_option("--out", gen.out, "output directory (default $GAMBLET_OUT_DIR or .)");
  g->add_option("--edges", gen.edges, "edge list 'a b [weight]' per line, 0-based");
  g->add_option("--nodes", gen.nodes, "node count (default: largest index + 1)");
  g->add_option("--reg", gen.reg, "diagonal regularization");
  g->add_option("--factors", gen.factors, "coefficient factors");
  g->add_option("--amplitude", gen.amplitude, "coefficient amplitude");

  SolveArgs sv;
  auto* s = app.add_subcommand("solve", "exact or fast gamblet solve");
  s->add_option("--matrix", sv.matrix, "Matrix Market file")->required()->check(CLI::ExistingFile);
  s->add_option("--rhs", sv.rhs, "right-hand side vector file")->check(CLI::ExistingFile);
  s->add_option("--problem", sv.problem, "problem.json (default: next to the matrix)");
  s->add_option("--mode", sv.mode, "exact or fast");
  s->add_option("--out", sv.out, "output directory");
  s->add_option("--H", sv.H, "scale ratio H");
  s->add_option("--epsilon", sv.epsilon, "target accuracy of the fast solve");
  s->add_option("--C-a", sv.C_a, "radius constant (default: calibrated value)");
  s->add_option("--rho", sv.rho, "uniform radius overriding the schedule");

  DiagnoseArgs dg;
  auto* d = app.add_subcommand("diagnose", "conditioning, decay, energy, Poincare and posterior checks");
  d->add_option("--matrix", dg.matrix, "Matrix Market file")->required()->check(CLI::ExistingFile);
  d->add_option("--problem", dg.problem, "problem.json (default: next to the matrix)");
  d->add_option("--rhs", dg.rhs, "right-hand side for the energy check")->check(CLI::ExistingFile);
  d->add_option("--checks", dg.checks, "comma separated: conditioning,decay,energy,poincare,posterior")->required();
  d->add_option("--out", dg.out, "report path (default $GAMBLET_OUT_DIR/report.json)");

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "doubling search for C_a on the FEM problem");
  c->add_option("--q", ca.q, "levels of the calibration problem");
  c->add_option("--epsilon", ca.epsilons, "comma separated target accuracies");
  c->add_option("--start", ca.start, "first C_a tried");
  c->add_option("--doublings", ca.doublings, "maximum number of doublings");
  c->add_option("--out", ca.out, "write the result as JSON");

  BenchArgs bn;
  auto* b = app.add_subcommand("bench", "fast solve timings and fitted growth exponents");
  b->add_option("--q-list", bn.qs, "comma separated levels");
  b->add_option("--epsilon", bn.epsilon, "target accuracy");
  b->add_option("--C-a", bn.C_a, "radius constant (default: calibrated value)");
  b->add_option("--out", bn.out, "write the result as JSON");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << GAMBLET_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  set_thread_count(threads);
  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (s->parsed()) return cmd_solve(sv, out, err);
    if (d->parsed()) return cmd_diagnose(dg, out);
    if (c->parsed()) return cmd_calibrate(ca, out);
    return cmd_bench(bn, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace gamblet::cli
