"""Linear-algebra kernels: sparse solves, symmetric eigenproblems, and the
smallest-singular-subspace extraction used for d-bar kernels."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "NonConvergence",
    "SingularOperator",
    "SparseOperator",
    "solve_sparse",
    "eig_symmetric",
    "smallest_singular_subspace",
    "jacobi_eigh",
]

SOLVE_RTOL = 1e-10


class NonConvergence(RuntimeError):
    pass


class SingularOperator(RuntimeError):
    pass


class SparseOperator:
    """Square or rectangular sparse matrix assembled from (row, col, value) triplets.

    Duplicate triplets are summed on assembly.
    """

    def __init__(self, shape, rows=None, cols=None, vals=None, matrix=None):
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape), int(shape))
        self.shape = tuple(int(s) for s in shape)
        if matrix is not None:
            self.matrix = sp.csr_matrix(matrix)
        else:
            rows = np.asarray(rows, dtype=np.int64)
            cols = np.asarray(cols, dtype=np.int64)
            if rows.size and (rows.min() < 0 or rows.max() >= self.shape[0]
                              or cols.min() < 0 or cols.max() >= self.shape[1]):
                raise IndexError("triplet index outside operator shape")
            self.matrix = sp.csr_matrix((vals, (rows, cols)), shape=self.shape)
            self.matrix.sum_duplicates()
        if self.matrix.shape != self.shape:
            raise ValueError("matrix shape mismatch")

    @classmethod
    def from_matrix(cls, m):
        m = sp.csr_matrix(m)
        return cls(m.shape, matrix=m)

    @property
    def dimension(self):
        return self.shape[1]

    def entries(self):
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self):
        return self.matrix.toarray()


def _as_csr(A):
    if isinstance(A, SparseOperator):
        return A.matrix
    return sp.csr_matrix(A)


def solve_sparse(A, b, method="direct", rtol=SOLVE_RTOL, maxiter=None):
    """Solve ``A x = b`` and verify the relative residual.

    ``method`` is ``"direct"`` (sparse LU with one refinement step),
    ``"cg"`` (real symmetric positive definite) or ``"gmres"`` (general,
    restarted). The iteration cap for the Krylov methods is ``10 n``.
    """
    M = _as_csr(A)
    n, m = M.shape
    if n != m:
        raise ValueError("solve_sparse needs a square operator")
    b = np.asarray(b)
    if b.shape[0] != n:
        raise ValueError("right-hand side length does not match operator")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n, dtype=np.result_type(M.dtype, b.dtype))
    maxiter = 10 * n if maxiter is None else maxiter

    if method == "direct":
        try:
            lu = spla.splu(M.tocsc())
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SingularOperator(str(exc)) from exc
        def lu_solve(rhs):
            if np.iscomplexobj(rhs) and not np.iscomplexobj(M.data):
                return lu.solve(rhs.real.copy()) + 1j * lu.solve(rhs.imag.copy())
            return lu.solve(rhs)

        x = lu_solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularOperator("non-finite solution from LU")
        x = x + lu_solve(b - M @ x)
    elif method == "cg":
        x, info = spla.cg(M, b, rtol=rtol * 0.1, atol=0.0, maxiter=maxiter,
                          M=sp.diags(1.0 / M.diagonal()))
        if info > 0:
            raise NonConvergence(f"CG hit iteration cap {maxiter}")
        if info < 0:
            raise SingularOperator("CG breakdown")
    elif method == "gmres":
        d = M.diagonal()
        if np.any(d == 0):
            raise SingularOperator("zero diagonal, Jacobi preconditioner undefined")
        x, info = spla.gmres(M, b, rtol=rtol * 0.1, atol=0.0, restart=50,
                             maxiter=maxiter, M=sp.diags(1.0 / d))
        if info > 0:
            raise NonConvergence(f"GMRES hit iteration cap {maxiter}")
        if info < 0:
            raise SingularOperator("GMRES breakdown")
    else:
        raise ValueError(f"unknown method {method!r}")

    res = np.linalg.norm(M @ x - b) / bnorm
    if not np.isfinite(res):
        raise SingularOperator("non-finite residual")
    if res > rtol:
        if method == "direct":
            raise SingularOperator(f"relative residual {res:.3e} after LU; operator is near-singular")
        raise NonConvergence(f"relative residual {res:.3e} above {rtol:.1e}")
    return x


def jacobi_eigh(M, tol=1e-15, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    as columns.
    """
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0 or n == 1:
        w = np.diag(A).copy()
        order = np.argsort(w)
        return w[order], V[:, order]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p, q
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp = V[:, p].copy()
                Vq = V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    else:
        raise NonConvergence("Jacobi sweeps did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def eig_symmetric(M):
    """Eigenvalues (ascending) and eigenvectors of a dense real symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("square matrix required")
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return jacobi_eigh(0.5 * (M + M.T))


def smallest_singular_subspace(A, k, extra=4, tol=0.0):
    """The ``k`` smallest singular values of ``A`` (rows >= cols) and an
    orthonormal basis of the matching right singular subspace.

    Returns ``(sigma, V, sigma_next)`` where ``V`` has shape ``(ncols, k)`` and
    ``sigma_next`` holds the next ``extra`` singular values, used by callers to
    judge the spectral gap.
    """
    M = _as_csr(A)
    nrows, ncols = M.shape
    if nrows < ncols:
        raise ValueError("smallest_singular_subspace needs rows >= columns")
    if not 0 < k < ncols:
        raise ValueError("k must satisfy 0 < k < number of columns")
    m = min(k + extra, ncols - 1)
    N = (M.conj().T @ M).tocsc()
    if ncols <= 400:
        w, V = np.linalg.eigh(N.toarray())
        w, V = w[: m], V[:, : m]
    else:
        # shift-invert about a small negative shift so that N - shift is definite
        shift = -1e-10 * spla.norm(N, 1)
        try:
            w, V = spla.eigsh(N, k=m, sigma=shift, which="LM", tol=tol,
                              v0=np.ones(ncols, dtype=N.dtype))
        except spla.ArpackNoConvergence as exc:
            raise NonConvergence(str(exc)) from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    w = np.clip(w, 0.0, None)
    V, _ = np.linalg.qr(V)
    # Rayleigh-Ritz on the orthonormalized block keeps pairs consistent
    H = V.conj().T @ (N @ V)
    w2, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    V = V @ U
    # singular values from ||A v|| keep full relative accuracy for tiny sigma
    sig = np.linalg.norm(M @ V, axis=0)
    order = np.argsort(sig)
    sig, V = sig[order], V[:, order]
    return sig[:k], V[:, :k], sig[k:]
