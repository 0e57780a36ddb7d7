#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gamblet/diagnostics.hpp"
#include "gamblet/error.hpp"
#include "gamblet/gamblet_exact.hpp"
#include "gamblet/gamblet_fast.hpp"
#include "gamblet/matrix_market.hpp"
#include "gamblet/problems.hpp"
#include "gamblet/solvers.hpp"

namespace py = pybind11;
using namespace gamblet;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<Index, py::array::c_style | py::array::forcecast>;

template <class T>
py::array_t<T> to_numpy(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <class T>
py::array_t<T> to_numpy(std::span<const T> v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Vector from_numpy(const DoubleArray& a) {
  if (a.ndim() != 1) throw ContractError("expected a 1-D array");
  return Vector(a.data(), a.data() + a.size());
}

std::vector<Index> index_vector(const IndexArray& a) {
  if (a.ndim() != 1) throw ContractError("expected a 1-D index array");
  return std::vector<Index>(a.data(), a.data() + a.size());
}

py::list vectors(const std::vector<Vector>& vs, std::size_t first) {
  py::list out;
  for (std::size_t k = first; k < vs.size(); ++k) out.append(to_numpy(vs[k]));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact and fast gamblet transforms";
  m.attr("__version__") = GAMBLET_VERSION;

  auto base = py::register_exception<Error>(m, "GambletError");
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<StructureError>(m, "StructureError", base.ptr());
  py::register_exception<RankError>(m, "RankError", base.ptr());
  py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
  py::register_exception<NotSpdError>(m, "NotSpdError", base.ptr());
  py::register_exception<BreakdownError>(m, "BreakdownError", base.ptr());
  py::register_exception<SolveError>(m, "SolveError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());

  py::class_<SparseMatrix>(m, "SparseMatrix")
      .def_static(
          "from_csr",
          [](Index rows, Index cols, const IndexArray& indptr, const IndexArray& indices, const DoubleArray& data) {
            return SparseMatrix::from_csr(rows, cols, index_vector(indptr), index_vector(indices), from_numpy(data));
          },
          py::arg("rows"), py::arg("cols"), py::arg("indptr"), py::arg("indices"), py::arg("data"))
      .def_static("from_dense", &SparseMatrix::from_dense, py::arg("dense"), py::arg("drop_tol") = 0.0)
      .def_static("identity", &SparseMatrix::identity)
      .def_property_readonly("shape", [](const SparseMatrix& a) { return py::make_tuple(a.rows(), a.cols()); })
      .def_property_readonly("nnz", &SparseMatrix::nnz)
      .def("csr",
           [](const SparseMatrix& a) {
             return py::make_tuple(to_numpy(a.row_offsets()), to_numpy(a.col_indices()), to_numpy(a.values()));
           })
      .def("to_dense", &SparseMatrix::to_dense)
      .def("transpose", &SparseMatrix::transpose)
      .def("is_symmetric", &SparseMatrix::is_symmetric, py::arg("rel_tol") = 1e-12)
      .def("matvec", [](const SparseMatrix& a, const DoubleArray& x) { return to_numpy(spmv(a, from_numpy(x))); })
      .def("__repr__", [](const SparseMatrix& a) {
        return "<SparseMatrix " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ", nnz=" +
               std::to_string(a.nnz()) + ">";
      });

  m.def("read_matrix", &mm_read, py::arg("path"));
  m.def("write_matrix", &mm_write, py::arg("path"), py::arg("matrix"), py::arg("symmetric_storage") = false);
  m.def("energy_norm", [](const SparseMatrix& a, const DoubleArray& x) { return energy_norm(a, from_numpy(x)); });

  py::class_<GridProblem>(m, "GridProblem")
      .def_readonly("q", &GridProblem::q)
      .def_readonly("side", &GridProblem::side)
      .def_readonly("h", &GridProblem::h)
      .def_readonly("A", &GridProblem::A)
      .def_property_readonly("size", &GridProblem::size)
      .def_property_readonly("coeff", [](const GridProblem& p) { return to_numpy(p.coeff); })
      .def("rhs_smooth", [](const GridProblem& p) { return to_numpy(rhs_smooth(p)); })
      .def("rhs_dirac", [](const GridProblem& p) { return to_numpy(rhs_dirac(p)); });

  m.def(
      "assemble_fem",
      [](int q, int factors, double amplitude) { return assemble_fem(q, CoefficientOptions{factors, amplitude}); },
      py::arg("q"), py::arg("factors") = 7, py::arg("amplitude") = 0.2);
  m.def(
      "graph_laplacian",
      [](Index n, const std::vector<std::tuple<Index, Index, double>>& edges, double reg) {
        std::vector<Edge> e;
        e.reserve(edges.size());
        for (const auto& [a, b, w] : edges) e.push_back({a, b, w});
        return graph_laplacian(n, e, reg);
      },
      py::arg("n"), py::arg("edges"), py::arg("reg") = 0.0);

  py::class_<HierarchyOperators>(m, "HierarchyOperators")
      .def_property_readonly("depth", &HierarchyOperators::depth)
      .def("level_size", &HierarchyOperators::level_size);
  m.def("fem_operators", &fem_operators, py::arg("q"));
  m.def(
      "grid_operators", [](int dim, int q, int branch) { return make_haar_operators(build_grid_tree(dim, q, branch)); },
      py::arg("dim"), py::arg("q"), py::arg("branch") = 2);
  m.def(
      "aggregation_operators",
      [](const SparseMatrix& a, Index coarse_size) { return make_haar_operators(aggregation_tree(a, coarse_size)); },
      py::arg("A"), py::arg("coarse_size") = 4);

  py::class_<GambletHierarchy>(m, "GambletHierarchy")
      .def_readonly("q", &GambletHierarchy::q)
      .def_readonly("localized", &GambletHierarchy::localized)
      .def_readonly("has_basis", &GambletHierarchy::has_basis)
      .def("level_size", &GambletHierarchy::level_size)
      .def("A", [](const GambletHierarchy& h, int k) { return h.A.at(static_cast<std::size_t>(k)); })
      .def("B", [](const GambletHierarchy& h, int k) { return h.B.at(static_cast<std::size_t>(k)); })
      .def("R", [](const GambletHierarchy& h, int k) { return h.R.at(static_cast<std::size_t>(k)); })
      .def("Psi", [](const GambletHierarchy& h, int k) {
        if (!h.has_basis) throw ContractError("hierarchy was built without the basis");
        return h.Psi.at(static_cast<std::size_t>(k));
      });

  py::class_<SubbandSolution>(m, "SubbandSolution")
      .def_readonly("q", &SubbandSolution::q)
      .def_property_readonly("u", [](const SubbandSolution& s) { return to_numpy(s.u); })
      .def_property_readonly("v", [](const SubbandSolution& s) { return vectors(s.v, 1); },
                             "subband components v^(1)..v^(q)");

  m.def(
      "gamblet_transform",
      [](const SparseMatrix& a, const HierarchyOperators& ops, bool store_basis) {
        py::gil_scoped_release release;
        return gamblet_transform(a.with_symmetry_flag(), ops, TransformOptions{{}, store_basis});
      },
      py::arg("A"), py::arg("ops"), py::arg("store_basis") = false);
  m.def(
      "gamblet_solve",
      [](const GambletHierarchy& h, const HierarchyOperators& ops, const DoubleArray& b) {
        return gamblet_solve(h, ops, from_numpy(b));
      },
      py::arg("hierarchy"), py::arg("ops"), py::arg("b"));

  py::class_<LocalizationSchedule>(m, "LocalizationSchedule")
      .def_readonly("H", &LocalizationSchedule::H)
      .def_readonly("epsilon", &LocalizationSchedule::epsilon)
      .def_readonly("C_a", &LocalizationSchedule::C_a)
      .def_property_readonly("rho", [](const LocalizationSchedule& s) { return to_numpy(s.rho); })
      .def_readonly("coarse_tol", &LocalizationSchedule::coarse_tol);
  m.def("default_schedule", &default_schedule, py::arg("H"), py::arg("q"), py::arg("epsilon"), py::arg("C_a"),
        py::arg("d") = 2.0);
  m.def("uniform_schedule", &uniform_schedule, py::arg("H"), py::arg("q"), py::arg("epsilon"), py::arg("C_a"),
        py::arg("rho"), py::arg("d") = 2.0);

  py::class_<FastResult>(m, "FastResult")
      .def_readonly("solution", &FastResult::solution)
      .def_readonly("hierarchy", &FastResult::hierarchy)
      .def_readonly("transform_seconds", &FastResult::transform_seconds)
      .def_readonly("solve_seconds", &FastResult::solve_seconds)
      .def_property_readonly("total_nnz", &FastResult::total_nnz);
  m.def(
      "fast_gamblet_solve",
      [](const SparseMatrix& a, const HierarchyOperators& ops, const DoubleArray& g, const LocalizationSchedule& s) {
        const Vector b = from_numpy(g);
        py::gil_scoped_release release;
        return fast_gamblet_solve(a.with_symmetry_flag(), ops, b, s);
      },
      py::arg("A"), py::arg("ops"), py::arg("g"), py::arg("schedule"));

  m.def(
      "extreme_eigs",
      [](const SparseMatrix& a, double tol) {
        const auto e = extreme_eigs(a, tol);
        return py::make_tuple(e.lambda_min, e.lambda_max);
      },
      py::arg("A"), py::arg("tol") = 1e-8);
  m.def(
      "level_conditioning",
      [](const GambletHierarchy& h) {
        std::vector<double> c;
        for (const auto& e : level_conditioning(h)) c.push_back(e.cond);
        c.erase(c.begin());
        return to_numpy(c);
      },
      py::arg("hierarchy"), "cond(A^(1)), cond(B^(2)), ..., cond(B^(q))");
  m.def(
      "error_curve",
      [](const GambletHierarchy& h, const HierarchyOperators& ops, const DoubleArray& b) {
        auto e = error_curve(h, ops, from_numpy(b));
        e.erase(e.begin());
        return to_numpy(e);
      },
      py::arg("hierarchy"), py::arg("ops"), py::arg("b"), "|u - u^(k)|_A for k = 1..q");
  m.def(
      "poincare_H",
      [](const SparseMatrix& a, const HierarchyOperators& ops) { return poincare_constants(a, ops).H; },
      py::arg("A"), py::arg("ops"));
}
