import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hitlab.numerics import (NonConvergence, SingularOperator, SparseOperator, eig_symmetric,
                             jacobi_eigh, smallest_singular_subspace, solve_sparse)


def test_triplets_sum_duplicates():
    A = SparseOperator(3, [0, 0, 2], [1, 1, 2], [1.0, 2.0, 5.0])
    assert A.matrix[0, 1] == 3.0
    assert A.matrix.nnz == 2


def test_triplet_out_of_range():
    with pytest.raises(IndexError):
        SparseOperator(2, [0, 2], [0, 0], [1.0, 1.0])


def test_solve_direct_and_cg_agree():
    n = 50
    A = sp.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    b = np.arange(n, dtype=float)
    x1 = solve_sparse(SparseOperator.from_matrix(A), b)
    x2 = solve_sparse(SparseOperator.from_matrix(A), b, method="cg", rtol=1e-12)
    assert np.allclose(A @ x1, b, atol=1e-10)
    assert np.allclose(x1, x2, atol=1e-8)


def test_singular_operator_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularOperator):
        solve_sparse(SparseOperator.from_matrix(A), np.array([1.0, 0.0]))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-10, 10)))
def test_jacobi_matches_lapack(M):
    S = M + M.T
    w, V = jacobi_eigh(S)
    assert np.allclose(w, np.linalg.eigvalsh(S), atol=1e-10 * max(1.0, np.abs(S).max()))
    assert np.allclose(V.T @ V, np.eye(6), atol=1e-10)
    assert np.allclose(S @ V, V * w, atol=1e-9 * max(1.0, np.abs(S).max()))


def test_eig_symmetric_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_sweep_limit():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((8, 8))
    with pytest.raises(NonConvergence):
        jacobi_eigh(M + M.T, max_sweeps=1)


@pytest.mark.parametrize("n", [40, 600])
def test_smallest_singular_subspace(n):
    # dense and shift-invert paths; known spectrum via orthogonal factors
    rng = np.random.default_rng(n)
    s = np.concatenate([[1e-8, 2e-8, 3e-8], np.linspace(1.0, 2.0, n - 3)])
    U, _ = np.linalg.qr(rng.standard_normal((n + 5, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = sp.csr_matrix((U * s) @ V.T)
    sig, W, nxt = smallest_singular_subspace(A, 3)
    assert np.allclose(sig, s[:3], rtol=1e-3)
    assert nxt[0] == pytest.approx(1.0, rel=1e-6)
    P = V[:, :3] @ V[:, :3].T
    assert np.allclose(P @ W, W, atol=1e-6)
