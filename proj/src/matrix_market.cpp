#include "gamblet/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "gamblet/error.hpp"

namespace gamblet {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct Header {
  bool coordinate = true;
  bool symmetric = false;
};

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path.string()), in_(path) {
    if (!in_) throw ParseError(path_, 0, "cannot open file");
  }

  // Next non-comment, non-blank line; false at end of file.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++lineno_;
      if (line.empty() || line[0] == '%') continue;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      return true;
    }
    return false;
  }

  bool raw(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++lineno_;
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, lineno_, what); }
  std::size_t lineno() const { return lineno_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t lineno_ = 0;
};

Header read_header(LineReader& r, bool allow_array) {
  std::string line;
  if (!r.raw(line)) r.fail("empty file");
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") r.fail("missing %%MatrixMarket banner");
  if (lower(object) != "matrix") r.fail("unsupported object '" + object + "'");
  Header h;
  format = lower(format);
  if (format == "array") {
    if (!allow_array) r.fail("array format is not accepted for sparse matrices");
    h.coordinate = false;
  } else if (format != "coordinate") {
    r.fail("unsupported format '" + format + "'");
  }
  if (lower(field) != "real" && lower(field) != "double" && lower(field) != "integer")
    r.fail("unsupported field '" + field + "'");
  symmetry = lower(symmetry);
  if (symmetry == "symmetric") {
    h.symmetric = true;
  } else if (symmetry != "general") {
    r.fail("unsupported symmetry '" + symmetry + "'");
  }
  return h;
}

std::vector<Triplet> read_coordinate_body(LineReader& r, const Header& h, Index& nrows, Index& ncols) {
  std::string line;
  if (!r.next(line)) r.fail("missing size line");
  Index nnz = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> nrows >> ncols >> nnz) || nrows < 0 || ncols < 0 || nnz < 0) r.fail("bad size line");
  }
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(h.symmetric ? 2 * nnz : nnz));
  for (Index k = 0; k < nnz; ++k) {
    if (!r.next(line)) r.fail("expected " + std::to_string(nnz) + " entries, got " + std::to_string(k));
    std::istringstream ss(line);
    Index i = 0;
    Index j = 0;
    double v = 0.0;
    if (!(ss >> i >> j >> v)) r.fail("bad entry line");
    if (i < 1 || i > nrows || j < 1 || j > ncols) r.fail("index out of bounds");
    t.push_back({i - 1, j - 1, v});
    if (h.symmetric && i != j) t.push_back({j - 1, i - 1, v});
  }
  return t;
}

void write_number(std::ostream& os, double v) { os << fmt::format("{:.17g}", v); }

}  // namespace

SparseMatrix mm_read(const std::filesystem::path& path) {
  LineReader r(path);
  const Header h = read_header(r, false);
  Index nrows = 0;
  Index ncols = 0;
  auto t = read_coordinate_body(r, h, nrows, ncols);
  auto m = SparseMatrix::from_triplets(nrows, ncols, std::move(t));
  return h.symmetric ? m.with_symmetry_flag() : m;
}

void mm_write(const std::filesystem::path& path, const SparseMatrix& m, bool symmetric_storage) {
  if (symmetric_storage && !m.is_symmetric(0.0))
    throw ContractError("mm_write: symmetric storage requested for a non-symmetric matrix");
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "%%MatrixMarket matrix coordinate real " << (symmetric_storage ? "symmetric" : "general") << "\n";
  Index count = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j : m.row_cols(i))
      if (!symmetric_storage || j <= i) ++count;
  os << m.rows() << " " << m.cols() << " " << count << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    auto cols = m.row_cols(i);
    auto vals = m.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      if (symmetric_storage && cols[p] > i) continue;
      os << i + 1 << " " << cols[p] + 1 << " ";
      write_number(os, vals[p]);
      os << "\n";
    }
  }
  if (!os) throw Error("write failed for " + path.string());
}

Vector mm_read_vector(const std::filesystem::path& path) {
  LineReader r(path);
  const Header h = read_header(r, true);
  if (h.coordinate) {
    Index nrows = 0;
    Index ncols = 0;
    auto t = read_coordinate_body(r, h, nrows, ncols);
    if (ncols != 1) r.fail("vector file must have one column");
    Vector v(static_cast<std::size_t>(nrows), 0.0);
    for (const auto& e : t) v[e.row] += e.value;
    return v;
  }
  std::string line;
  if (!r.next(line)) r.fail("missing size line");
  Index nrows = 0;
  Index ncols = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> nrows >> ncols) || nrows < 0) r.fail("bad size line");
  }
  if (ncols != 1) r.fail("vector file must have one column");
  Vector v;
  v.reserve(static_cast<std::size_t>(nrows));
  while (static_cast<Index>(v.size()) < nrows) {
    if (!r.next(line)) r.fail("expected " + std::to_string(nrows) + " values");
    std::istringstream ss(line);
    double x = 0.0;
    if (!(ss >> x)) r.fail("bad value line");
    v.push_back(x);
  }
  return v;
}

void mm_write_vector(const std::filesystem::path& path, std::span<const double> v) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << v.size() << " 1 " << v.size() << "\n";
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << i + 1 << " 1 ";
    write_number(os, v[i]);
    os << "\n";
  }
  if (!os) throw Error("write failed for " + path.string());
}

}  // namespace gamblet
