"""Goldman pairing, the Labourie-Loftin complex structure and the signature
of omega(., J.) at the Fuchsian point.

A real tangent vector is stored as a pair ``(left, right)`` of tangent
representatives whose sum is the actual variation of the flat connection.
For a quadratic direction ``psi`` the left part comes from ``psibar`` (the
variation of the first complex structure) and the right part from ``psi``;
for a cubic direction ``alpha`` the left part varies ``Q1`` by ``alpha`` and
the right part varies ``Qbar2`` by ``conj(alpha)``.  ``J`` acts by ``i`` on
the left and ``-i`` on the right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .connections import TangentRep, assemble_D, fuchsian_tangent, path_tangent
from .differentials import DifferentialField, conjugate
from .numerics import eig_symmetric
from .wang import solve_wang

__all__ = [
    "MeshMismatch",
    "DegenerateGram",
    "RealTangent",
    "GramReport",
    "pair_omega",
    "wedge_trace",
    "apply_J",
    "omega",
    "fuchsian_directions",
    "gram_signature",
    "real_path_tangents",
    "complex_path_tangents",
    "check_lagrangian",
    "check_compatibility",
    "check_involution",
    "SIGNATURE_GAP",
]

SIGNATURE_GAP = 1e3


class MeshMismatch(ValueError):
    pass


class DegenerateGram(RuntimeError):
    pass


def wedge_trace(T1, T2):
    """Per-copy coefficient of dz^dzbar in tr(T1 ^ T2)."""
    return (np.einsum("nij,nji->n", T1.P, T2.R) - np.einsum("nij,nji->n", T1.R, T2.P))


def pair_omega(T1, T2, mesh=None):
    """int tr(T1 ^ T2) with dz^dzbar = -2i dx dy, by the vertex quadrature."""
    mesh = T1.mesh if mesh is None else mesh
    if T1.mesh is not mesh or T2.mesh is not mesh:
        raise MeshMismatch("tangent representatives live on different meshes")
    return complex(-2j * np.sum(mesh.area_weight * wedge_trace(T1, T2)))


@dataclass
class RealTangent:
    left: TangentRep
    right: TangentRep
    label: str = ""

    @property
    def total(self):
        return self.left + self.right

    def __add__(self, other):
        return RealTangent(self.left + other.left, self.right + other.right, self.label)

    def __mul__(self, s):
        return RealTangent(self.left * s, self.right * s, self.label)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1


def apply_J(v):
    return RealTangent(v.left * 1j, v.right * -1j, v.label)


def omega(u, v):
    return pair_omega(u.total, v.total)


def fuchsian_directions(sigma0, quadratic, cubic):
    """The real tangent basis at the Fuchsian point: each complex basis field
    ``f`` contributes the directions ``f`` and ``i f``."""
    out = []
    for j, psi in enumerate(quadratic):
        for s, tag in ((1.0, ""), (1j, "i")):
            f = psi * s
            out.append(RealTangent(fuchsian_tangent(sigma0, "c1", conjugate(f)),
                                   fuchsian_tangent(sigma0, "c2", f), f"q{j}{tag}"))
    for j, alpha in enumerate(cubic):
        for s, tag in ((1.0, ""), (1j, "i")):
            f = alpha * s
            out.append(RealTangent(fuchsian_tangent(sigma0, "Q1", f),
                                   fuchsian_tangent(sigma0, "Q2", conjugate(f)), f"c{j}{tag}"))
    return out


@dataclass
class GramReport:
    labels: list
    matrix: np.ndarray
    eigenvalues: np.ndarray
    n_plus: int
    n_minus: int
    n_zero: int
    symmetry_residual: float
    imaginary_residual: float
    compatibility_residual: float
    block_residual: float
    mesh_checksum: str = ""
    level: int = -1
    extra: dict = field(default_factory=dict)

    @property
    def signature(self):
        return (self.n_plus, self.n_minus)

    def verdicts(self):
        smallest = float(np.abs(self.eigenvalues).min())
        sig_ok = (self.n_plus, self.n_minus, self.n_zero) == (6, 10, 0) and \
            smallest >= SIGNATURE_GAP * self.symmetry_residual * float(np.abs(self.matrix).max())
        return {
            "signature": f"({self.n_plus}, {self.n_minus})",
            "signature_ok": bool(sig_ok),
            "compatibility_ok": bool(self.compatibility_residual <= 1e-9),
        }

    def to_dict(self):
        return {
            "format": "hitlab-gram",
            "version": 1,
            "level": self.level,
            "mesh_checksum": self.mesh_checksum,
            "labels": list(self.labels),
            "matrix": [[float(x) for x in row] for row in self.matrix],
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "n_plus": self.n_plus,
            "n_minus": self.n_minus,
            "n_zero": self.n_zero,
            "symmetry_residual": self.symmetry_residual,
            "imaginary_residual": self.imaginary_residual,
            "compatibility_residual": self.compatibility_residual,
            "block_residual": self.block_residual,
            "verdicts": self.verdicts(),
            "extra": self.extra,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["labels"], np.array(d["matrix"]), np.array(d["eigenvalues"]),
                   d["n_plus"], d["n_minus"], d["n_zero"], d["symmetry_residual"],
                   d["imaginary_residual"], d["compatibility_residual"],
                   d["block_residual"], d.get("mesh_checksum", ""), d.get("level", -1),
                   d.get("extra", {}))


def _fuchsian_sigma(mesh):
    zero3 = DifferentialField.zeros(mesh, 3)
    return solve_wang(mesh, zero3)


def gram_signature(mesh, quadratic, cubic, sigma0=None, raise_on_degenerate=True):
    """Gram matrix of omega(., J.) on the 16 real directions and its signature."""
    sigma0 = _fuchsian_sigma(mesh) if sigma0 is None else sigma0
    dirs = fuchsian_directions(sigma0, quadratic, cubic)
    n = len(dirs)
    totals = [d.total for d in dirs]
    jtotals = [apply_J(d).total for d in dirs]
    W = np.empty((n, n), dtype=complex)
    Om = np.empty((n, n), dtype=complex)
    Omj = np.empty((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            W[a, b] = pair_omega(totals[a], jtotals[b])
            Om[a, b] = pair_omega(totals[a], totals[b])
            Omj[a, b] = pair_omega(jtotals[a], jtotals[b])
    scale = float(np.abs(W).max())
    G = W.real
    sym = float(np.abs(G - G.T).max() / scale)
    imag = float(np.abs(W.imag).max() / scale)
    iu = np.triu_indices(n, 1)
    compat = float(np.abs(Omj - Om)[iu].max() / scale)
    nq = 2 * len(quadratic)
    block = float(np.abs(G[:nq, nq:]).max() / scale) if nq < n else 0.0
    w, _ = eig_symmetric(0.5 * (G + G.T))
    thresh = SIGNATURE_GAP * max(sym, 1e-16) * scale
    n_zero = int(np.sum(np.abs(w) < thresh))
    n_plus = int(np.sum(w >= thresh))
    n_minus = int(np.sum(w <= -thresh))
    rep = GramReport([d.label for d in dirs], G, w, n_plus, n_minus, n_zero, sym, imag,
                     compat, block, mesh.checksum(), mesh.level)
    if n_zero and raise_on_degenerate:
        raise DegenerateGram(f"{n_zero} eigenvalues below {thresh:.3e}")
    return rep


# ---------------------------------------------------------------------------
# finite-difference tangents away from the Fuchsian point

def real_path_tangents(mesh, Q0, directions, dt, base=None):
    """Tangents of real-mode paths ``Q1 = Q0 + s d``, ``Qbar2 = conj(Q1)``."""
    base = solve_wang(mesh, Q0) if base is None else base
    out = []
    for d in directions:
        Ds = []
        for s in (dt, -dt):
            Q = Q0 + d * s
            sol = solve_wang(mesh, Q, u0=base.u)
            Ds.append(assemble_D(sol))
        out.append(path_tangent(Ds[0], Ds[1], dt))
    return out


def complex_path_tangents(mesh, Q1, Qbar2, directions, dt, vary="Q1", base=None):
    """Tangents of complex-mode paths moving only one factor."""
    if base is None:
        base = solve_wang(mesh, Q1, Qbar2, mode="complex")
    out = []
    for d in directions:
        Ds = []
        for s in (dt, -dt):
            if vary == "Q1":
                a, b = Q1 + d * s, Qbar2
            elif vary == "Q2":
                a, b = Q1, Qbar2 + d * s
            else:
                raise ValueError("vary must be 'Q1' or 'Q2'")
            sol = solve_wang(mesh, a, b, mode="complex", u0=base.u)
            Ds.append(assemble_D(sol))
        out.append(path_tangent(Ds[0], Ds[1], dt))
    return out


def check_lagrangian(mesh, Q0, directions, dt, t=1.0):
    """Max |omega| between variations moving only (Q1) and, separately, only
    (Qbar2), at the real point ``t Q0``.  Returns a dict of residuals."""
    Q1 = Q0 * t
    Qb = conjugate(Q1)
    if not directions or not np.any([np.any(d.values) for d in directions]):
        return {"Q1": 0.0, "Q2": 0.0, "scale": 0.0}
    base = solve_wang(mesh, Q1, Qb, mode="complex")
    res = {}
    for vary, dirs in (("Q1", directions), ("Q2", [conjugate(d) for d in directions])):
        T = complex_path_tangents(mesh, Q1, Qb, dirs, dt, vary=vary, base=base)
        worst = 0.0
        for i in range(len(T)):
            for j in range(i + 1, len(T)):
                worst = max(worst, abs(pair_omega(T[i], T[j])))
        res[vary] = worst
    return res


def _cubic_real_directions(cubic):
    dirs = []
    for f in cubic:
        dirs.append(f * 1.0)
        dirs.append(f * 1j)
    return dirs


def _j_index(n):
    """J on the (f, i f) ordering: J f = i f, J (i f) = -f."""
    idx = np.empty(n, dtype=int)
    sign = np.empty(n)
    for k in range(0, n, 2):
        idx[k], sign[k] = k + 1, 1.0
        idx[k + 1], sign[k + 1] = k, -1.0
    return idx, sign


def check_compatibility(mesh, Q0, cubic, dt, t=1.0, tangents=None):
    """max |omega(Ju, Jv) - omega(u, v)| / scale over the cubic real directions at
    the real point ``t Q0``."""
    Q = Q0 * t
    dirs = _cubic_real_directions(cubic)
    T = real_path_tangents(mesh, Q, dirs, dt) if tangents is None else tangents
    n = len(T)
    Om = np.array([[pair_omega(T[a], T[b]) for b in range(n)] for a in range(n)])
    idx, sign = _j_index(n)
    OmJ = Om[np.ix_(idx, idx)] * np.outer(sign, sign)
    scale = float(np.abs(Om).max())
    iu = np.triu_indices(n, 1)
    return {"residual": float(np.abs(OmJ - Om)[iu].max() / scale), "scale": scale,
            "pairs": int(len(iu[0])), "omega": Om}


def check_involution(mesh, Q0, cubic, dt, t=1.0):
    """max |omega_{-Q}(-u, -v) - omega_{Q}(u, v)| over the cubic real directions."""
    Q = Q0 * t
    if not np.any(Q.values):
        return {"discrepancy": 0.0}
    dirs = _cubic_real_directions(cubic)
    Tp = real_path_tangents(mesh, Q, dirs, dt)
    Tm = real_path_tangents(mesh, -Q, [-d for d in dirs], dt)
    n = len(dirs)
    Op = np.array([[pair_omega(Tp[a], Tp[b]) for b in range(n)] for a in range(n)])
    Omn = np.array([[pair_omega(Tm[a], Tm[b]) for b in range(n)] for a in range(n)])
    return {"discrepancy": float(np.abs(Op - Omn).max()), "scale": float(np.abs(Op).max()),
            "tangents": Tp}
