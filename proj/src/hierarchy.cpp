#include "gamblet/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gamblet/error.hpp"
#include "gamblet/matrix_market.hpp"
#include "gamblet/solvers.hpp"

namespace gamblet {

using nlohmann::json;

IndexTree IndexTree::from_parents(Index level_one_size, std::vector<std::vector<Index>> parents,
                                  std::optional<GridGeometry> geometry) {
  if (level_one_size <= 0) throw StructureError("IndexTree: level 1 must be nonempty");
  const int q = std::max<int>(1, static_cast<int>(parents.size()) - 1);
  IndexTree t;
  t.geometry_ = geometry;
  t.sizes_.assign(static_cast<std::size_t>(q) + 1, 0);
  t.parent_.resize(static_cast<std::size_t>(q) + 1);
  t.child_offsets_.resize(static_cast<std::size_t>(q) + 1);
  t.child_list_.resize(static_cast<std::size_t>(q) + 1);
  t.digit_.resize(static_cast<std::size_t>(q) + 1);
  t.sizes_[1] = level_one_size;
  t.digit_[1].resize(static_cast<std::size_t>(level_one_size));
  std::iota(t.digit_[1].begin(), t.digit_[1].end(), Index{0});

  for (int k = 2; k <= q; ++k) {
    auto& par = parents[static_cast<std::size_t>(k)];
    const Index n = static_cast<Index>(par.size());
    const Index np = t.sizes_[k - 1];
    t.sizes_[k] = n;
    std::vector<Index> count(static_cast<std::size_t>(np) + 1, 0);
    for (Index i = 0; i < n; ++i) {
      if (par[i] < 0 || par[i] >= np)
        throw StructureError("IndexTree: level " + std::to_string(k) + " label " + std::to_string(i) +
                             " has parent out of range");
      ++count[par[i] + 1];
    }
    for (Index p = 0; p < np; ++p) {
      if (count[p + 1] == 0 && k <= q)
        throw StructureError("IndexTree: level " + std::to_string(k - 1) + " label " + std::to_string(p) +
                             " has no children");
      count[p + 1] += count[p];
    }
    auto& offsets = t.child_offsets_[k - 1];
    offsets = count;
    auto& list = t.child_list_[k - 1];
    list.resize(static_cast<std::size_t>(n));
    auto& digit = t.digit_[k];
    digit.resize(static_cast<std::size_t>(n));
    std::vector<Index> fill(count.begin(), count.end() - 1);
    for (Index i = 0; i < n; ++i) {
      const Index p = par[i];
      digit[i] = fill[p] - offsets[p];
      list[fill[p]++] = i;
    }
    // Interior levels must be in tuple order: children are contiguous ranges.
    if (k < q) {
      for (Index i = 0; i < n; ++i)
        if (list[i] != i)
          throw StructureError("IndexTree: level " + std::to_string(k) + " labels are not in tuple order");
    }
    t.parent_[k] = std::move(par);
  }
  return t;
}

void IndexTree::check_level(int k) const {
  if (k < 1 || k > depth()) throw ContractError("IndexTree: level " + std::to_string(k) + " out of range");
}

Index IndexTree::size(int k) const {
  check_level(k);
  return sizes_[k];
}

const std::vector<Index>& IndexTree::parents(int k) const {
  if (k < 2 || k > depth()) throw ContractError("IndexTree: no parents at level " + std::to_string(k));
  return parent_[k];
}

Index IndexTree::parent(int k, Index i) const {
  const auto& p = parents(k);
  if (i < 0 || i >= static_cast<Index>(p.size())) throw ContractError("IndexTree: label out of range");
  return p[i];
}

Index IndexTree::ancestor(int k, Index i, int level) const {
  check_level(k);
  if (level < 1 || level > k) throw ContractError("IndexTree: ancestor level out of range");
  if (i < 0 || i >= sizes_[k]) throw ContractError("IndexTree: label out of range");
  for (int m = k; m > level; --m) i = parent_[m][i];
  return i;
}

std::vector<Index> IndexTree::ancestors(int k, int level) const {
  check_level(k);
  if (level < 1 || level > k) throw ContractError("IndexTree: ancestor level out of range");
  std::vector<Index> a(static_cast<std::size_t>(sizes_[k]));
  std::iota(a.begin(), a.end(), Index{0});
  for (int m = k; m > level; --m)
    for (auto& x : a) x = parent_[m][x];
  return a;
}

std::span<const Index> IndexTree::children(int k, Index i) const {
  if (k < 1 || k >= depth()) throw ContractError("IndexTree: no children at level " + std::to_string(k));
  if (i < 0 || i >= sizes_[k]) throw ContractError("IndexTree: label out of range");
  const auto& off = child_offsets_[k];
  return std::span<const Index>(child_list_[k]).subspan(static_cast<std::size_t>(off[i]),
                                                         static_cast<std::size_t>(off[i + 1] - off[i]));
}

Index IndexTree::digit(int k, Index i) const {
  check_level(k);
  if (i < 0 || i >= sizes_[k]) throw ContractError("IndexTree: label out of range");
  return digit_[k][i];
}

std::vector<Index> IndexTree::tuple(int k, Index i) const {
  check_level(k);
  std::vector<Index> t(static_cast<std::size_t>(k));
  for (int m = k; m >= 1; --m) {
    t[m - 1] = digit_[m][i];
    if (m > 1) i = parent_[m][i];
  }
  return t;
}

IndexTree IndexTree::relabel_leaves(std::span<const Index> new_index) const {
  const int q = depth();
  if (q < 1) throw ContractError("relabel_leaves: empty tree");
  const Index n = sizes_[q];
  if (static_cast<Index>(new_index.size()) != n) throw ContractError("relabel_leaves: size mismatch");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index v : new_index) {
    if (v < 0 || v >= n || seen[v]) throw ContractError("relabel_leaves: not a permutation");
    seen[v] = 1;
  }
  IndexTree t = *this;
  if (q == 1) return t;
  auto& par = t.parent_[q];
  auto& dig = t.digit_[q];
  for (Index old = 0; old < n; ++old) {
    par[new_index[old]] = parent_[q][old];
    dig[new_index[old]] = digit_[q][old];
  }
  for (auto& c : t.child_list_[q - 1]) c = new_index[c];
  return t;
}

CellBox IndexTree::cell_box(int k, Index i) const {
  if (!geometry_) throw ContractError("cell_box: tree has no grid geometry");
  const auto tup = tuple(k, i);
  const int dim = geometry_->dim;
  const int b = geometry_->branch;
  CellBox box;
  double scale = 1.0;
  for (int m = 0; m < k; ++m) {
    scale /= b;
    Index d = tup[m];
    for (int ax = 0; ax < dim; ++ax) {
      box.lower[ax] += static_cast<double>(d % b) * scale;
      d /= b;
    }
  }
  box.side = scale;
  return box;
}

IndexTree build_grid_tree(int dim, int q, int branch) {
  if (dim < 1 || dim > 3) throw ContractError("build_grid_tree: dim must be 1, 2 or 3");
  if (branch < 2) throw ContractError("build_grid_tree: branch must be at least 2");
  if (q < 1) throw ContractError("build_grid_tree: q must be at least 1");
  constexpr double kMaxLeaves = 67108864.0;  // 2^26
  const double leaves = std::pow(static_cast<double>(branch), static_cast<double>(q) * dim);
  if (leaves > kMaxLeaves)
    throw CapacityError("build_grid_tree: " + std::to_string(leaves) + " leaves exceed the 2^26 cap");
  Index c = 1;
  for (int a = 0; a < dim; ++a) c *= branch;
  std::vector<std::vector<Index>> parents(static_cast<std::size_t>(q) + 1);
  Index n = c;
  for (int k = 2; k <= q; ++k) {
    n *= c;
    auto& p = parents[static_cast<std::size_t>(k)];
    p.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) p[i] = i / c;
  }
  return IndexTree::from_parents(c, std::move(parents), GridGeometry{dim, branch});
}

std::vector<SparseMatrix> build_haar_pi(const IndexTree& tree) {
  const int q = tree.depth();
  std::vector<SparseMatrix> pi(static_cast<std::size_t>(q) + 1);
  for (int k = 1; k < q; ++k) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(tree.size(k + 1)));
    for (Index i = 0; i < tree.size(k); ++i) {
      const auto ch = tree.children(k, i);
      const double v = 1.0 / std::sqrt(static_cast<double>(ch.size()));
      for (Index j : ch) t.push_back({i, j, v});
    }
    pi[k] = SparseMatrix::from_triplets(tree.size(k), tree.size(k + 1), std::move(t));
  }
  return pi;
}

WaveletMatrices build_cellular_W(const IndexTree& tree, const std::vector<SparseMatrix>& pi) {
  const int q = tree.depth();
  if (static_cast<int>(pi.size()) < q) throw StructureError("build_cellular_W: missing pi levels");
  WaveletMatrices out;
  out.W.resize(static_cast<std::size_t>(q) + 1);
  out.wavelet_cell.resize(static_cast<std::size_t>(q) + 1);
  for (int k = 2; k <= q; ++k) {
    const SparseMatrix& p = pi[k - 1];
    if (p.rows() != tree.size(k - 1) || p.cols() != tree.size(k))
      throw StructureError("build_cellular_W: pi at level " + std::to_string(k - 1) + " has wrong shape");
    std::vector<Triplet> t;
    auto& cell_of = out.wavelet_cell[k];
    Index row = 0;
    for (Index i = 0; i < tree.size(k - 1); ++i) {
      const auto ch = tree.children(k - 1, i);
      const std::size_t m = ch.size();
      // Cell vector p restricted to the children, in sibling order.
      std::vector<double> v(m, 0.0);
      const auto cols = p.row_cols(i);
      const auto vals = p.row_values(i);
      for (std::size_t s = 0; s < cols.size(); ++s) {
        if (vals[s] == 0.0) continue;
        if (tree.parent(k, cols[s]) != i)
          throw StructureError("build_cellular_W: pi row " + std::to_string(i) + " at level " +
                               std::to_string(k - 1) + " is not cellular");
        v[static_cast<std::size_t>(tree.digit(k, cols[s]))] = vals[s];
      }
      const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (norm == 0.0)
        throw StructureError("build_cellular_W: pi row " + std::to_string(i) + " at level " +
                             std::to_string(k - 1) + " is zero");
      for (auto& x : v) x /= norm;
      // Householder H = I - 2 h h^T / h^T h with h = e1 - v maps e1 to v.
      std::vector<double> h = v;
      for (auto& x : h) x = -x;
      h[0] += 1.0;
      const double hh = std::inner_product(h.begin(), h.end(), h.begin(), 0.0);
      const bool trivial = hh < 1e-28;
      for (std::size_t r = 1; r < m; ++r) {
        for (std::size_t j = 0; j < m; ++j) {
          double val = (j == r) ? 1.0 : 0.0;
          if (!trivial) val -= 2.0 * h[j] * h[r] / hh;
          if (val != 0.0) t.push_back({row, ch[j], val});
        }
        cell_of.push_back(i);
        ++row;
      }
    }
    out.W[k] = SparseMatrix::from_triplets(row, tree.size(k), std::move(t));
  }
  return out;
}

HierarchyOperators make_haar_operators(IndexTree tree) {
  HierarchyOperators ops;
  ops.pi = build_haar_pi(tree);
  auto w = build_cellular_W(tree, ops.pi);
  ops.W = std::move(w.W);
  ops.wavelet_cell = std::move(w.wavelet_cell);
  ops.tree = std::move(tree);
  ops.orthonormal = true;
  ops.cellular = true;
  return ops;
}

SparseMatrix pseudo_inverse_pi(const SparseMatrix& pi) {
  const SparseMatrix g = multiply(pi, pi.transpose());
  bool diagonal = true;
  bool identity = true;
  for (Index i = 0; i < g.rows() && diagonal; ++i) {
    const auto cols = g.row_cols(i);
    const auto vals = g.row_values(i);
    for (std::size_t s = 0; s < cols.size(); ++s) {
      if (cols[s] == i) {
        if (std::abs(vals[s] - 1.0) > 1e-14) identity = false;
      } else if (vals[s] != 0.0) {
        diagonal = false;
        break;
      }
    }
  }
  if (diagonal && identity) {
    for (double d : g.diagonal())
      if (d == 0.0) identity = false;
    if (identity) return pi;
  }
  if (diagonal) {
    const Vector d = g.diagonal();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(pi.nnz()));
    for (Index i = 0; i < pi.rows(); ++i) {
      if (!(d[i] > 0.0)) throw RankError("pseudo_inverse_pi: row " + std::to_string(i) + " of pi is zero");
      const auto cols = pi.row_cols(i);
      const auto vals = pi.row_values(i);
      for (std::size_t s = 0; s < cols.size(); ++s) t.push_back({i, cols[s], vals[s] / d[i]});
    }
    return SparseMatrix::from_triplets(pi.rows(), pi.cols(), std::move(t));
  }
  if (g.rows() > kDenseCap) throw CapacityError("pseudo_inverse_pi: non-diagonal pi pi^T above the dense cap");
  Eigen::LLT<DenseMatrix> llt(g.to_dense());
  if (llt.info() != Eigen::Success) throw RankError("pseudo_inverse_pi: pi pi^T is singular");
  const DenseMatrix gd = g.to_dense();
  const Eigen::VectorXd dg = gd.diagonal();
  const Eigen::VectorXd ld = DenseMatrix(llt.matrixL()).diagonal();
  // Relative pivot test: LLT succeeds on nearly singular matrices.
  for (Index i = 0; i < ld.size(); ++i)
    if (ld(i) * ld(i) < 1e-13 * dg.maxCoeff()) throw RankError("pseudo_inverse_pi: pi pi^T is singular");
  return SparseMatrix::from_dense(llt.solve(pi.to_dense()));
}

SparseMatrix measurement_matrix(const HierarchyOperators& ops, int k) {
  const int q = ops.depth();
  if (k < 1 || k > q) throw ContractError("measurement_matrix: level out of range");
  SparseMatrix m = SparseMatrix::identity(ops.level_size(q));
  for (int l = q - 1; l >= k; --l) m = multiply(ops.pi[l], m);
  return m;
}

namespace {

LevelDeviation deviation_from_identity(const SparseMatrix& g, int level) {
  LevelDeviation d{level, 0.0, -1};
  for (Index i = 0; i < g.rows(); ++i) {
    const auto cols = g.row_cols(i);
    const auto vals = g.row_values(i);
    bool has_diag = false;
    for (std::size_t s = 0; s < cols.size(); ++s) {
      const double e = std::abs(vals[s] - (cols[s] == i ? 1.0 : 0.0));
      if (cols[s] == i) has_diag = true;
      if (e > d.value) d = {level, e, i};
    }
    if (!has_diag && 1.0 > d.value) d = {level, 1.0, i};
  }
  return d;
}

LevelDeviation max_entry(const SparseMatrix& m, int level) {
  LevelDeviation d{level, 0.0, -1};
  for (Index i = 0; i < m.rows(); ++i)
    for (double v : m.row_values(i))
      if (std::abs(v) > d.value) d = {level, std::abs(v), i};
  return d;
}

double max_of(const std::vector<LevelDeviation>& v) {
  double m = 0.0;
  for (const auto& d : v) m = std::max(m, d.value);
  return m;
}

}  // namespace

double ConstructionReport::max_pi_deviation() const { return max_of(pi_orthonormality); }
double ConstructionReport::max_w_deviation() const { return max_of(w_orthonormality); }
double ConstructionReport::max_w_pi() const { return max_of(w_pi_orthogonality); }

ConstructionReport verify_constructions(const HierarchyOperators& ops) {
  ConstructionReport r;
  const IndexTree& tree = ops.tree;
  const int q = tree.depth();
  for (int k = 1; k < q; ++k) {
    const SparseMatrix& p = ops.pi.at(static_cast<std::size_t>(k));
    r.pi_orthonormality.push_back(deviation_from_identity(multiply(p, p.transpose()), k));
    for (Index i = 0; i < p.rows(); ++i) {
      const auto cols = p.row_cols(i);
      const auto vals = p.row_values(i);
      for (std::size_t s = 0; s < cols.size(); ++s)
        if (vals[s] != 0.0 && tree.parent(k + 1, cols[s]) != i) ++r.cellularity_violations;
    }
  }
  for (int k = 2; k <= q; ++k) {
    const SparseMatrix& w = ops.W.at(static_cast<std::size_t>(k));
    r.w_orthonormality.push_back(deviation_from_identity(multiply(w, w.transpose()), k));
    r.w_pi_orthogonality.push_back(max_entry(multiply(w, ops.pi[k - 1].transpose()), k));
    if (w.rows() != tree.size(k) - tree.size(k - 1)) r.dimension_mismatches.push_back(k);
    const auto& cell = k < static_cast<int>(ops.wavelet_cell.size()) ? ops.wavelet_cell[k]
                                                                      : std::vector<Index>{};
    for (Index i = 0; i < w.rows(); ++i) {
      const auto cols = w.row_cols(i);
      const auto vals = w.row_values(i);
      // Without an explicit cell map the row's cell is the parent of its first entry.
      Index c = -1;
      if (static_cast<Index>(cell.size()) == w.rows()) {
        c = cell[i];
      } else {
        for (std::size_t s = 0; s < cols.size() && c < 0; ++s)
          if (vals[s] != 0.0) c = tree.parent(k, cols[s]);
      }
      for (std::size_t s = 0; s < cols.size(); ++s)
        if (vals[s] != 0.0 && tree.parent(k, cols[s]) != c) ++r.cellularity_violations;
    }
  }
  return r;
}

void save_operators(const std::filesystem::path& dir, const HierarchyOperators& ops) {
  std::filesystem::create_directories(dir);
  const int q = ops.depth();
  json j;
  j["depth"] = q;
  j["orthonormal"] = ops.orthonormal;
  j["cellular"] = ops.cellular;
  json sizes = json::array();
  json wsizes = json::array();
  json parents = json::object();
  json cells = json::object();
  for (int k = 1; k <= q; ++k) {
    sizes.push_back(ops.level_size(k));
    if (k >= 2) {
      wsizes.push_back(ops.wavelet_size(k));
      parents[std::to_string(k)] = ops.tree.parents(k);
      if (k == q) {
        std::vector<Index> order;
        for (Index i = 0; i < ops.level_size(q - 1); ++i)
          for (Index c : ops.tree.children(q - 1, i)) order.push_back(c);
        j["leaf_order"] = order;
      }
      if (k < static_cast<int>(ops.wavelet_cell.size())) cells[std::to_string(k)] = ops.wavelet_cell[k];
      mm_write(dir / ("W_" + std::to_string(k) + ".mtx"), ops.W[k]);
    }
    if (k < q) mm_write(dir / ("pi_" + std::to_string(k) + ".mtx"), ops.pi[k]);
  }
  j["level_sizes"] = sizes;
  j["wavelet_sizes"] = wsizes;
  j["parents"] = parents;
  j["wavelet_cells"] = cells;
  if (const auto& g = ops.tree.geometry()) j["grid"] = {{"dim", g->dim}, {"branch", g->branch}};
  std::ofstream os(dir / "hierarchy.json");
  if (!os) throw Error("cannot write " + (dir / "hierarchy.json").string());
  os << j.dump(2) << "\n";
}

HierarchyOperators load_operators(const std::filesystem::path& dir) {
  const auto path = dir / "hierarchy.json";
  std::ifstream is(path);
  if (!is) throw ParseError(path.string(), 0, "cannot open file");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  try {
    const int q = j.at("depth").get<int>();
    const auto sizes = j.at("level_sizes").get<std::vector<Index>>();
    if (q < 1 || static_cast<int>(sizes.size()) != q) throw ParseError(path.string(), 0, "bad level_sizes");
    std::vector<std::vector<Index>> parents(static_cast<std::size_t>(q) + 1);
    for (int k = 2; k <= q; ++k) parents[k] = j.at("parents").at(std::to_string(k)).get<std::vector<Index>>();
    std::optional<GridGeometry> geom;
    if (j.contains("grid")) geom = GridGeometry{j["grid"].at("dim").get<int>(), j["grid"].at("branch").get<int>()};
    // Leaves may be relabeled: build the tree in sibling order, then restore
    // the stored labels.
    std::vector<Index> leaf_perm;
    if (q >= 2) {
      auto& pq = parents[q];
      const Index n = static_cast<Index>(pq.size());
      std::vector<Index> order(static_cast<std::size_t>(n));
      if (j.contains("leaf_order")) {
        order = j["leaf_order"].get<std::vector<Index>>();
        if (static_cast<Index>(order.size()) != n) throw ParseError(path.string(), 0, "bad leaf_order");
      } else {
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return pq[a] < pq[b]; });
      }
      for (Index s = 0; s < n; ++s)
        if (order[s] < 0 || order[s] >= n) throw ParseError(path.string(), 0, "bad leaf_order");
      std::vector<Index> sorted(static_cast<std::size_t>(n));
      leaf_perm.resize(static_cast<std::size_t>(n));
      for (Index s = 0; s < n; ++s) {
        sorted[s] = pq[order[s]];
        leaf_perm[s] = order[s];
      }
      pq = std::move(sorted);
    }
    IndexTree tree = IndexTree::from_parents(sizes[0], std::move(parents), geom);
    if (q >= 2) tree = tree.relabel_leaves(leaf_perm);
    for (int k = 1; k <= q; ++k)
      if (tree.size(k) != sizes[k - 1]) throw ParseError(path.string(), 0, "level sizes disagree with parents");
    HierarchyOperators ops;
    ops.tree = std::move(tree);
    ops.orthonormal = j.value("orthonormal", false);
    ops.cellular = j.value("cellular", false);
    ops.pi.resize(static_cast<std::size_t>(q) + 1);
    ops.W.resize(static_cast<std::size_t>(q) + 1);
    ops.wavelet_cell.resize(static_cast<std::size_t>(q) + 1);
    for (int k = 1; k <= q; ++k) {
      if (k < q) ops.pi[k] = mm_read(dir / ("pi_" + std::to_string(k) + ".mtx"));
      if (k >= 2) {
        ops.W[k] = mm_read(dir / ("W_" + std::to_string(k) + ".mtx"));
        if (j.contains("wavelet_cells") && j["wavelet_cells"].contains(std::to_string(k)))
          ops.wavelet_cell[k] = j["wavelet_cells"][std::to_string(k)].get<std::vector<Index>>();
      }
    }
    for (int k = 1; k < q; ++k)
      if (ops.pi[k].rows() != sizes[k - 1] || ops.pi[k].cols() != sizes[k])
        throw StructureError("load_operators: pi_" + std::to_string(k) + " has wrong shape");
    for (int k = 2; k <= q; ++k)
      if (ops.W[k].cols() != sizes[k - 1])
        throw StructureError("load_operators: W_" + std::to_string(k) + " has wrong shape");
    return ops;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace gamblet
