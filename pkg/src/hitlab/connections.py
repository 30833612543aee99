"""Flat SL(3,C) connections of affine-sphere data, on the real locus.

Resolved form of the connection in the frame (dz, 1, 1/dz), with
``lam = e^{2u} lam_base``, ``a = d/dz log lam``, ``b = d/dzbar log lam``,
``q = Q1`` and ``bb = Qbar2``::

    A_z    = [[-a, 0, q/sqrt2], [1, 0, 0], [0, 1, a]]
    A_zbar = [[0, lam/2, 0], [0, 0, lam/2], [(4/sqrt2) bb / lam^2, 0, 0]]

``D = d + A_z dz + A_zbar dzbar``; parallel sections solve ``ds = -A s``.
The diagonal carries ``d log lam`` only through its dz component; any dzbar
part there breaks flatness at solutions of the Wang equation (checked by
``curvature_residual``).

The mirrored connection ``D'`` lives in the frame (dzbar, 1, 1/dzbar); the
model ``D0`` is ``D`` gauged by ``diag(lam0/lam, 1, lam/lam0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .differentials import DifferentialField, pairing_h
from .numerics import solve_sparse
from .surface import (derivative_operators, dlog_lam0, fit_weights, lam0, mobius,
                      mobius_derivative, monomials, patches)
from .wang import linearize_L, residual_G

__all__ = [
    "UnsolvedState",
    "PathNotFound",
    "DiscreteConnection",
    "TangentRep",
    "HolonomyMatrix",
    "expm",
    "expm_frechet",
    "assemble_D",
    "assemble_Dprime",
    "assemble_D0",
    "gauge_transform",
    "curvature_residual",
    "holonomy",
    "generator_loops",
    "loop_holonomies",
    "holonomy_report",
    "irr_embed",
    "fuchsian_tangent",
    "path_tangent",
    "closedness_residual",
]

SQRT2 = np.sqrt(2.0)
UNSOLVED_TOL = 1e-9


class UnsolvedState(RuntimeError):
    pass


class PathNotFound(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# batched matrix exponential

_PADE6 = [1.0, 1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280]


def expm(X):
    """exp of a stack of square matrices (..., n, n).

    Diagonal Pade(6, 6) after scaling to norm <= 1/2, then squaring.
    """
    X = np.asarray(X)
    dtype = np.result_type(X.dtype, float)
    X = X.astype(dtype, copy=False)
    n = X.shape[-1]
    norms = np.abs(X).sum(axis=-2).max(axis=-1)
    s = np.maximum(0, np.ceil(np.log2(np.maximum(norms, 1e-300) / 0.5))).astype(int)
    smax = int(s.max(initial=0))
    Y = X / (2.0 ** s)[..., None, None]
    eye = np.broadcast_to(np.eye(n, dtype=dtype), X.shape)
    P = eye * _PADE6[0]
    Q = eye * _PADE6[0]
    Yk = eye
    for k in range(1, 7):
        Yk = Yk @ Y
        P = P + _PADE6[k] * Yk
        Q = Q + (-1) ** k * _PADE6[k] * Yk
    E = np.linalg.solve(Q, P)
    for j in range(smax):
        sq = E @ E
        E = np.where((s > j)[..., None, None], sq, E)
    return E


def expm_frechet(X, dX):
    """exp(X) and its derivative in direction dX, batched, via the block
    exponential of [[X, dX], [0, X]]."""
    n = X.shape[-1]
    big = np.zeros(X.shape[:-2] + (2 * n, 2 * n), dtype=np.result_type(X, dX, float))
    big[..., :n, :n] = X
    big[..., n:, n:] = X
    big[..., :n, n:] = dX
    E = expm(big)
    return E[..., :n, :n], E[..., :n, n:]


# ---------------------------------------------------------------------------
# data types

@dataclass
class DiscreteConnection:
    """Per-copy ``(A_z, A_zbar)`` in each copy's chart.

    ``frame`` is ``"dz"`` for (dz, 1, 1/dz) and ``"dzbar"`` for the mirrored
    frame (dzbar, 1, 1/dzbar); it fixes the transition cocycle across glued
    sides.
    """

    mesh: object
    Az: np.ndarray
    Azb: np.ndarray
    frame: str = "dz"

    def traces(self):
        return (np.abs(np.trace(self.Az, axis1=1, axis2=2)).max(),
                np.abs(np.trace(self.Azb, axis1=1, axis2=2)).max())

    def frame_change(self, g, z):
        """Matrix taking a section written in the chart at ``g(z)`` to the chart at ``z``."""
        d = mobius_derivative(g, z)
        if self.frame == "dzbar":
            d = np.conj(d)
        return np.diag([d, 1.0, 1.0 / d])

    @classmethod
    def zero(cls, mesh):
        z = np.zeros((len(mesh.vertices), 3, 3), dtype=complex)
        return cls(mesh, z, z.copy())


@dataclass
class TangentRep:
    """End-valued 1-form ``P dz + R dzbar`` per copy."""

    mesh: object
    P: np.ndarray
    R: np.ndarray
    base: DiscreteConnection = None

    def __add__(self, other):
        return TangentRep(self.mesh, self.P + other.P, self.R + other.R, self.base)

    def __sub__(self, other):
        return TangentRep(self.mesh, self.P - other.P, self.R - other.R, self.base)

    def __mul__(self, s):
        return TangentRep(self.mesh, self.P * s, self.R * s, self.base)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def traces(self):
        return (np.abs(np.trace(self.P, axis1=1, axis2=2)).max(),
                np.abs(np.trace(self.R, axis1=1, axis2=2)).max())

    def scale(self):
        return max(np.abs(self.P).max(initial=0.0), np.abs(self.R).max(initial=0.0))

    @classmethod
    def zero(cls, mesh, base=None):
        z = np.zeros((len(mesh.vertices), 3, 3), dtype=complex)
        return cls(mesh, z, z.copy(), base)


@dataclass
class HolonomyMatrix:
    matrix: np.ndarray
    word: tuple
    base: int

    @property
    def trace(self):
        return complex(np.trace(self.matrix))

    @property
    def det_residual(self):
        return float(abs(np.linalg.det(self.matrix) - 1.0))


# ---------------------------------------------------------------------------
# assembly

def _copy_fields(sigma):
    """lam, dlog lam (dz and dzbar parts), q and bb at every copy."""
    mesh = sigma.mesh
    z = mesh.vertices
    J = mesh.jac
    dof = mesh.dof
    Dz, Dzb = derivative_operators(mesh)
    w = np.asarray(sigma.u, dtype=complex)
    lam_copy = np.exp(2 * w[dof]) * lam0(z)
    default = np.array_equal(sigma.lam_base, mesh.rep_lam0)
    if not default:
        w = w + 0.5 * np.log(sigma.lam_base / mesh.rep_lam0)
        lam_copy = np.exp(2 * w[dof]) * lam0(z)
    a = 2 * (Dz @ w)[dof] * J + dlog_lam0(z)
    b = 2 * (Dzb @ w)[dof] * np.conj(J) + np.conj(dlog_lam0(z))
    q = sigma.Q1.chart_values(mesh)
    bb = sigma.Qbar2.chart_values(mesh)
    return lam_copy, a, b, q, bb


def _check_solved(sigma, tol):
    r = np.abs(residual_G(sigma)).max()
    if r > tol:
        raise UnsolvedState(f"Wang residual {r:.3e} above {tol:.1e}")


def assemble_D(sigma, check=True, tol=UNSOLVED_TOL):
    if check:
        _check_solved(sigma, tol)
    lam, a, _, q, bb = _copy_fields(sigma)
    N = len(lam)
    Az = np.zeros((N, 3, 3), dtype=complex)
    Azb = np.zeros((N, 3, 3), dtype=complex)
    Az[:, 0, 0] = -a
    Az[:, 2, 2] = a
    Az[:, 1, 0] = 1.0
    Az[:, 2, 1] = 1.0
    Az[:, 0, 2] = q / SQRT2
    Azb[:, 0, 1] = lam / 2
    Azb[:, 1, 2] = lam / 2
    Azb[:, 2, 0] = (4 / SQRT2) * bb / lam ** 2
    return DiscreteConnection(sigma.mesh, Az, Azb, "dz")


def assemble_Dprime(sigma, check=True, tol=UNSOLVED_TOL):
    """The mirrored connection in the frame (dzbar, 1, 1/dzbar)."""
    if check:
        _check_solved(sigma, tol)
    lam, _, b, q, bb = _copy_fields(sigma)
    N = len(lam)
    Az = np.zeros((N, 3, 3), dtype=complex)
    Azb = np.zeros((N, 3, 3), dtype=complex)
    Azb[:, 0, 0] = -b
    Azb[:, 2, 2] = b
    Azb[:, 1, 0] = 1.0
    Azb[:, 2, 1] = 1.0
    Azb[:, 0, 2] = bb / SQRT2
    Az[:, 0, 1] = lam / 2
    Az[:, 1, 2] = lam / 2
    Az[:, 2, 0] = (4 / SQRT2) * q / lam ** 2
    return DiscreteConnection(sigma.mesh, Az, Azb, "dzbar")


def assemble_D0(sigma, check=True, tol=UNSOLVED_TOL):
    """The model connection on the fixed bundle of the base structure."""
    if check:
        _check_solved(sigma, tol)
    mesh = sigma.mesh
    lam, a, b, q, bb = _copy_fields(sigma)
    l0 = lam0(mesh.vertices)
    a0 = dlog_lam0(mesh.vertices)
    b0 = np.conj(a0)
    r = lam / l0
    N = len(lam)
    Az = np.zeros((N, 3, 3), dtype=complex)
    Azb = np.zeros((N, 3, 3), dtype=complex)
    Az[:, 0, 0] = -a0
    Az[:, 2, 2] = a0
    Azb[:, 0, 0] = -b0 + b
    Azb[:, 2, 2] = b0 - b
    Azb[:, 0, 1] = l0 / 2
    Azb[:, 1, 2] = l0 / 2
    Az[:, 0, 2] = q / (SQRT2 * r ** 2)
    Az[:, 1, 0] = r
    Az[:, 2, 1] = r
    Azb[:, 2, 0] = (4 / SQRT2) * bb / l0 ** 2
    return DiscreteConnection(mesh, Az, Azb, "dz")


def gauge_transform(D, g, dg_z, dg_zb, frame=None):
    """``A' = g A g^-1 - (dg) g^-1`` for per-copy gauge matrices."""
    gi = np.linalg.inv(g)
    Az = g @ D.Az @ gi - dg_z @ gi
    Azb = g @ D.Azb @ gi - dg_zb @ gi
    return DiscreteConnection(D.mesh, Az, Azb, frame or D.frame)


# ---------------------------------------------------------------------------
# curvature and transport

def _edge_transport(D, i, j):
    """Transport matrices along chart edges copy i -> copy j (batched)."""
    z = D.mesh.vertices
    dz = z[j] - z[i]
    X = -(0.5 * (D.Az[i] + D.Az[j]) * dz[:, None, None]
          + 0.5 * (D.Azb[i] + D.Azb[j]) * np.conj(dz)[:, None, None])
    return expm(X)


def _unitary_scale(mesh, defect, norm):
    """Express per-triangle defects in the metric's unitary frame and divide by
    hyperbolic area (``norm="hyperbolic"``), or leave them in the chart frame
    and divide by chart area (``norm="chart"``)."""
    area = np.abs(mesh.tri_area)
    if norm == "chart":
        return np.linalg.norm(defect, ord=2, axis=(1, 2)) / area
    if norm != "hyperbolic":
        raise ValueError("norm must be 'hyperbolic' or 'chart'")
    l0 = lam0(mesh.vertices[mesh.triangles].mean(axis=1))
    r = np.sqrt(l0)
    S = np.stack([1 / r, np.ones_like(r), r], axis=1)
    M = defect * S[:, :, None] / S[:, None, :]
    return np.linalg.norm(M, ord=2, axis=(1, 2)) / (area * l0)


_GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
FIT_DEGREE = 3
FIT_RINGS = 2


def _reconstruction(mesh, deg=FIT_DEGREE, rings=FIT_RINGS):
    """Per-triangle polynomial reconstruction at the two Gauss points of each
    edge.  Returns (patch triangle, copy, Mobius into triangle chart,
    sparse weight matrices for the 6 Gauss points)."""
    key = ("reconstruction", deg, rings)
    if key in mesh._cache:
        return mesh._cache[key]
    t_idx, v_idx, m_idx, transforms = patches(mesh, "triangle", rings)
    M = transforms[m_idx]
    zeta = mobius(M, mesh.vertices[v_idx])
    tri_z = mesh.vertices[mesh.triangles]
    centre = tri_z.mean(axis=1)
    h = np.abs(tri_z - centre[:, None]).max(axis=1)
    mons = monomials(deg)
    coef = fit_weights(t_idx, (zeta - centre[t_idx]) / h[t_idx], h, deg, mons)
    T = len(tri_z)
    W = []
    for i in range(3):
        za, zb = tri_z[:, i], tri_z[:, (i + 1) % 3]
        for g in _GAUSS:
            x = (za + g * (zb - za) - centre)[t_idx]
            w = sum(c * x ** a * np.conj(x) ** b for c, (a, b) in zip(coef, mons))
            W.append(sp.csr_matrix((w, (t_idx, np.arange(len(t_idx)))), shape=(T, len(t_idx))))
    out = (t_idx, v_idx, m_idx, M, W)
    mesh._cache[key] = out
    return out


def _to_triangle_charts(D, v_idx, m_idx, M, field=None, affine=True):
    """Connection (or, with ``affine=False``, 1-form) components at patch
    copies, rewritten in the chart of the patch's triangle."""
    Az = (D.Az if field is None else field[0])[v_idx].copy()
    Azb = (D.Azb if field is None else field[1])[v_idx].copy()
    sel = np.flatnonzero(m_idx)
    if sel.size:
        z = D.mesh.vertices[v_idx[sel]]
        Ms = M[sel]
        den = Ms[:, 1, 0] * z + Ms[:, 1, 1]
        d1 = 1.0 / den ** 2
        ratio = -2 * Ms[:, 1, 0] / den ** 3 / d1 ** 2          # M'' / M'^2
        e = d1 if D.frame == "dz" else np.conj(d1)
        g = np.stack([1 / e, np.ones_like(e), e], axis=1)
        conj_ = g[:, :, None] / g[:, None, :]
        Az[sel] = conj_ * Az[sel] / d1[:, None, None]
        Azb[sel] = conj_ * Azb[sel] / np.conj(d1)[:, None, None]
        if affine:
            if D.frame == "dz":
                Az[sel, 0, 0] += ratio
                Az[sel, 2, 2] -= ratio
            else:
                Azb[sel, 0, 0] += np.conj(ratio)
                Azb[sel, 2, 2] -= np.conj(ratio)
    return Az, Azb


def _gauss_values(W, Az, Azb):
    flat_z = Az.reshape(len(Az), 9)
    flat_zb = Azb.reshape(len(Azb), 9)
    return ([(w @ flat_z).reshape(-1, 3, 3) for w in W],
            [(w @ flat_zb).reshape(-1, 3, 3) for w in W])


def _magnus_edges(mesh, Gz, Gzb, Tz=None, Tzb=None):
    """Fourth-order Magnus exponents (and their directional derivatives) of the
    three edges of every triangle."""
    tri_z = mesh.vertices[mesh.triangles]
    c = np.sqrt(3) / 12
    out = []
    for i in range(3):
        dz = (tri_z[:, (i + 1) % 3] - tri_z[:, i])[:, None, None]
        X1 = Gz[2 * i] * dz + Gzb[2 * i] * np.conj(dz)
        X2 = Gz[2 * i + 1] * dz + Gzb[2 * i + 1] * np.conj(dz)
        Om = -0.5 * (X1 + X2) + c * (X2 @ X1 - X1 @ X2)
        if Tz is None:
            out.append((Om, None))
            continue
        Y1 = Tz[2 * i] * dz + Tzb[2 * i] * np.conj(dz)
        Y2 = Tz[2 * i + 1] * dz + Tzb[2 * i + 1] * np.conj(dz)
        dOm = -0.5 * (Y1 + Y2) + c * (Y2 @ X1 - X1 @ Y2 + X2 @ Y1 - Y1 @ X2)
        out.append((Om, dOm))
    return out


def _midpoint_edges(mesh, D, T=None):
    tris = mesh.triangles
    z = mesh.vertices
    out = []
    for i in range(3):
        a, b = tris[:, i], tris[:, (i + 1) % 3]
        dz = (z[b] - z[a])[:, None, None]
        X = -(0.5 * (D.Az[a] + D.Az[b]) * dz + 0.5 * (D.Azb[a] + D.Azb[b]) * np.conj(dz))
        dX = None
        if T is not None:
            dX = -(0.5 * (T.P[a] + T.P[b]) * dz + 0.5 * (T.R[a] + T.R[b]) * np.conj(dz))
        out.append((X, dX))
    return out


def _triangle_exponents(D, T=None, scheme="magnus"):
    if scheme == "midpoint":
        return _midpoint_edges(D.mesh, D, T)
    if scheme != "magnus":
        raise ValueError("scheme must be 'magnus' or 'midpoint'")
    t_idx, v_idx, m_idx, M, W = _reconstruction(D.mesh)
    Gz, Gzb = _gauss_values(W, *_to_triangle_charts(D, v_idx, m_idx, M))
    if T is None:
        return _magnus_edges(D.mesh, Gz, Gzb)
    Tz, Tzb = _gauss_values(W, *_to_triangle_charts(D, v_idx, m_idx, M, (T.P, T.R),
                                                    affine=False))
    return _magnus_edges(D.mesh, Gz, Gzb, Tz, Tzb)


def curvature_residual(D, norm="hyperbolic", scheme="magnus"):
    """Operator norm of (holonomy around each triangle - I) per unit area.

    The default measures the defect in the unitary frame of the hyperbolic
    metric per unit hyperbolic area, which does not depend on the chart.
    Edge transports use a fourth-order Magnus step on a cubic
    reconstruction of the connection (``scheme="magnus"``) or the midpoint
    exponential of the vertex values (``scheme="midpoint"``).
    """
    (O1, _), (O2, _), (O3, _) = _triangle_exponents(D, scheme=scheme)
    H = expm(O3) @ expm(O2) @ expm(O1)
    return _unitary_scale(D.mesh, H - np.eye(3), norm)


def closedness_residual(D, T, norm="hyperbolic", scheme="magnus"):
    """Per-triangle norm of the linearized holonomy defect of ``D + eps T``
    per unit area: a discrete d_D T."""
    E = [expm_frechet(O, dO) for O, dO in _triangle_exponents(D, T, scheme)]
    (T1, d1), (T2, d2), (T3, d3) = E
    out = d3 @ T2 @ T1 + T3 @ d2 @ T1 + T3 @ T2 @ d1
    return _unitary_scale(D.mesh, out, norm)


def _copy_graph(mesh):
    key = "copy_graph"
    if key not in mesh._cache:
        tris = mesh.triangles
        z = mesh.vertices
        i = np.concatenate([tris[:, 0], tris[:, 1], tris[:, 2]])
        j = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0]])
        mid = 0.5 * (z[i] + z[j])
        w = np.abs(z[j] - z[i]) * np.sqrt(lam0(mid))
        G = sp.coo_matrix((w, (i, j)), shape=(len(z), len(z))).tocsr()
        G = G.maximum(G.T)
        mesh._cache[key] = G
    return mesh._cache[key]


def _side_midpoint(mesh, k):
    z = mesh.vertices
    cand = np.flatnonzero(mesh.side_of == k)
    if cand.size == 0:
        raise PathNotFound(f"no copies on side {k}")
    target = np.exp(1j * k * np.pi / 4)
    ang = np.abs(np.angle(z[cand] / target))
    return int(cand[np.argmin(ang)])


def _path(mesh, src, dst, pred_cache):
    if src not in pred_cache:
        _, pred = dijkstra(_copy_graph(mesh), indices=src, return_predecessors=True)
        pred_cache[src] = pred
    pred = pred_cache[src]
    out = [dst]
    while out[-1] != src:
        p = pred[out[-1]]
        if p < 0:
            raise PathNotFound(f"copy {dst} unreachable from {src}")
        out.append(int(p))
    return out[::-1]


def generator_loops(mesh, base=None):
    """Mesh loops for the four side-pairing generators.

    Loop ``k`` runs from the base copy to the midpoint of side ``k``, crosses
    to the partner copy on side ``k+4`` and returns to the base.  Returns a
    list of (outgoing path, partner copy, incoming path, side map index).
    """
    base = mesh.base_vertex() if base is None else int(base)
    key = ("loops", base)
    if key in mesh._cache:
        return mesh._cache[key]
    g = mesh.domain.side_maps
    z = mesh.vertices
    preds = {}
    loops = []
    for k in range(4):
        p = _side_midpoint(mesh, k)
        target = np.linalg.solve(g[k], np.eye(2))  # g_k^-1 maps side k -> side k+4
        zp = (target[0, 0] * z[p] + target[0, 1]) / (target[1, 0] * z[p] + target[1, 1])
        cand = np.flatnonzero(mesh.dof == mesh.dof[p])
        partner = int(cand[np.argmin(np.abs(z[cand] - zp))])
        if abs(z[partner] - zp) > 1e-9:
            raise PathNotFound(f"no partner for side {k} midpoint")
        out = _path(mesh, base, p, preds)
        back = _path(mesh, partner, base, preds)
        loops.append((out, partner, back, k))
    mesh._cache[key] = loops
    return loops


def _transport_path(D, path):
    M = np.eye(3, dtype=complex)
    if len(path) < 2:
        return M
    path = np.asarray(path)
    Ts = _edge_transport(D, path[:-1], path[1:])
    for T in Ts:
        M = T @ M
    return M


def loop_holonomies(D, base=None):
    mesh = D.mesh
    g = mesh.domain.side_maps
    out = []
    for path, partner, back, k in generator_loops(mesh, base):
        T1 = _transport_path(D, path)
        C = D.frame_change(g[k], mesh.vertices[partner])
        T2 = _transport_path(D, back)
        out.append(T2 @ C @ T1)
    return out


def holonomy(D, word, base=None):
    """Holonomy of a word in the generators (letters +-1..+-4 for g_0..g_3)."""
    H = loop_holonomies(D, base)
    M = np.eye(3, dtype=complex)
    for letter in word:
        k = abs(int(letter)) - 1
        if not 0 <= k < 4:
            raise ValueError(f"bad letter {letter}")
        step = H[k] if letter > 0 else np.linalg.inv(H[k])
        M = step @ M
    b = D.mesh.base_vertex() if base is None else int(base)
    return HolonomyMatrix(M, tuple(int(x) for x in word), b)


def irr_embed(A):
    """Symmetric-square representation SL(2) -> SL(3)."""
    A = np.asarray(A)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    out = np.empty(A.shape[:-2] + (3, 3), dtype=A.dtype)
    out[..., 0, 0] = a * a
    out[..., 0, 1] = a * b
    out[..., 0, 2] = b * b
    out[..., 1, 0] = 2 * a * c
    out[..., 1, 1] = a * d + b * c
    out[..., 1, 2] = 2 * b * d
    out[..., 2, 0] = c * c
    out[..., 2, 1] = c * d
    out[..., 2, 2] = d * d
    return out


# ---------------------------------------------------------------------------
# tangents

_KINDS = {"c1": (2, "dzbar"), "c2": (2, "dz"), "Q1": (3, "dz"), "Q2": (3, "dzbar")}


def fuchsian_tangent(sigma, kind, field):
    """Closed-form tangent at the Fuchsian point.

    ``kind``: ``"c1"`` (field psibar dzbar^2), ``"c2"`` (phi dz^2),
    ``"Q1"`` (alpha dz^3) or ``"Q2"`` (betabar dzbar^3).
    """
    mesh = sigma.mesh
    if kind not in _KINDS:
        raise ValueError(f"unknown direction {kind!r}")
    if np.any(sigma.u) or np.any(sigma.Q1.values) or np.any(sigma.Qbar2.values):
        raise ValueError("base is not the Fuchsian point")
    if (field.weight, field.chirality) != _KINDS[kind]:
        raise ValueError(f"{kind} direction needs a weight-{_KINDS[kind][0]} "
                         f"{_KINDS[kind][1]} field")
    T = TangentRep.zero(mesh)
    v = field.chart_values(mesh)
    l0 = lam0(mesh.vertices)
    if kind == "c1":
        T.R[:, 1, 0] = v / l0
        T.R[:, 2, 1] = v / l0
    elif kind == "c2":
        T.P[:, 0, 1] = v / 2
        T.P[:, 1, 2] = v / 2
    else:
        # u-dot solves L udot = -dG/dt; the opposite cubic vanishes here
        if kind == "Q1":
            rhs = 0.25 * pairing_h(field, sigma.Qbar2, mesh, lam=sigma.lam_base)
        else:
            rhs = 0.25 * pairing_h(sigma.Q1, field, mesh, lam=sigma.lam_base)
        udot = solve_sparse(linearize_L(sigma), -rhs)
        if np.abs(udot).max(initial=0.0) > 1e-14:
            raise AssertionError("u-dot should vanish at the Fuchsian point")
        if kind == "Q1":
            T.P[:, 0, 2] = v / SQRT2
        else:
            T.R[:, 2, 0] = (4 / SQRT2) * v / l0 ** 2
    return T


def path_tangent(D_plus, D_minus, dt):
    """Central difference of two connections on the same mesh and frame."""
    if D_plus.mesh is not D_minus.mesh or D_plus.frame != D_minus.frame:
        raise ValueError("connections differ in mesh or frame")
    P = (D_plus.Az - D_minus.Az) / (2 * dt)
    R = (D_plus.Azb - D_minus.Azb) / (2 * dt)
    return TangentRep(D_plus.mesh, P, R)


def holonomy_report(D, words=None, base=None):
    """Records (word, trace, det residual, level) for the generators and
    any extra words."""
    words = [(k,) for k in range(1, 5)] + list(words or [])
    recs = []
    for w in words:
        H = holonomy(D, w, base)
        recs.append({"word": list(H.word), "trace_re": H.trace.real, "trace_im": H.trace.imag,
                     "det_residual": H.det_residual, "level": D.mesh.level})
    return recs
