import numpy as np
import pytest

import gamblet


def test_fem_exact_solve_matches_numpy():
    p = gamblet.assemble_fem(3)
    assert p.A.shape == (64, 64)
    b = p.rhs_smooth()
    ops = gamblet.fem_operators(3)
    h = gamblet.gamblet_transform(p.A, ops)
    s = gamblet.gamblet_solve(h, ops, b)
    ref = np.linalg.solve(p.A.to_dense(), b)
    assert np.max(np.abs(s.u - ref)) <= 1e-10 * np.max(np.abs(ref))
    assert len(s.v) == 3
    assert np.allclose(sum(s.v), s.u, atol=1e-12)


def test_fast_solve_meets_epsilon():
    p = gamblet.assemble_fem(4)
    ops = gamblet.fem_operators(4)
    b = p.rhs_smooth()
    exact = gamblet.gamblet_solve(gamblet.gamblet_transform(p.A, ops), ops, b).u
    sched = gamblet.default_schedule(0.5, 4, 1e-3, 0.5)
    assert sched.rho[4] >= sched.rho[1]
    r = gamblet.fast_gamblet_solve(p.A, ops, b, sched)
    err = gamblet.energy_norm(p.A, r.solution.u - exact)
    assert err <= 1e-3 * gamblet.energy_norm(p.A, exact)
    assert r.total_nnz > 0
    assert r.hierarchy.localized


def test_csr_round_trip_and_graph_solve():
    scipy_sparse = pytest.importorskip("scipy.sparse")
    L = gamblet.graph_laplacian(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 0.1)
    indptr, indices, data = L.csr()
    back = scipy_sparse.csr_matrix((data, indices, indptr), shape=L.shape)
    assert np.array_equal(back.toarray(), L.to_dense())
    M = gamblet.from_scipy(back)
    b = np.array([1.0, 0.0, 0.0, -1.0])
    for mode in ("exact", "fast"):
        u = gamblet.solve(M, b, mode=mode, epsilon=1e-8, C_a=2.0)
        assert np.allclose(M.matvec(u), b, atol=1e-6)


def test_diagnostics():
    p = gamblet.assemble_fem(3)
    ops = gamblet.fem_operators(3)
    h = gamblet.gamblet_transform(p.A, ops)
    cond = gamblet.level_conditioning(h)
    assert cond.shape == (3,)
    assert np.all(cond >= 1.0)
    e = gamblet.error_curve(h, ops, p.rhs_smooth())
    assert e[0] > e[1] > e[2] >= 0.0
    lo, hi = gamblet.extreme_eigs(p.A)
    assert 0.0 < lo < hi


def test_errors_are_typed():
    with pytest.raises(gamblet.ContractError):
        gamblet.default_schedule(1.5, 3, 0.1, 1.0)
    bad = gamblet.SparseMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(gamblet.GambletError):
        gamblet.gamblet_transform(bad, gamblet.grid_operators(1, 1, 2))
