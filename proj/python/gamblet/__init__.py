"""Exact and fast gamblet transforms for sparse SPD systems."""

from ._core import (
    __version__,
    GambletError,
    ContractError,
    StructureError,
    RankError,
    CapacityError,
    NotSpdError,
    BreakdownError,
    SolveError,
    ParseError,
    SparseMatrix,
    GridProblem,
    HierarchyOperators,
    GambletHierarchy,
    SubbandSolution,
    LocalizationSchedule,
    FastResult,
    read_matrix,
    write_matrix,
    energy_norm,
    assemble_fem,
    graph_laplacian,
    fem_operators,
    grid_operators,
    aggregation_operators,
    gamblet_transform,
    gamblet_solve,
    default_schedule,
    uniform_schedule,
    fast_gamblet_solve,
    extreme_eigs,
    level_conditioning,
    error_curve,
    poincare_H,
)


def from_scipy(matrix):
    """Convert a scipy.sparse matrix to a SparseMatrix."""
    csr = matrix.tocsr()
    csr.sum_duplicates()
    csr.sort_indices()
    return SparseMatrix.from_csr(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)


def solve(A, b, ops=None, mode="exact", epsilon=1e-3, C_a=0.5, H=0.5):
    """Solve A u = b with the exact or fast transform and return u."""
    if ops is None:
        ops = aggregation_operators(A)
    if mode == "exact":
        return gamblet_solve(gamblet_transform(A, ops), ops, b).u
    if mode == "fast":
        sched = default_schedule(H, ops.depth, epsilon, C_a)
        return fast_gamblet_solve(A, ops, b, sched).solution.u
    raise ValueError("mode must be 'exact' or 'fast'")
