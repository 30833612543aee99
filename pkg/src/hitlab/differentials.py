"""Holomorphic k-differentials on the glued octagon.

A field ``alpha dz^k`` (or ``alpha dzbar^k``) is stored by one coefficient per
dof, in the chart of the dof's representative copy.  The value in another
copy's chart follows from the gluing cocycle: ``alpha_copy = alpha_rep *
J^k`` with ``J`` the derivative of the copy -> representative map.

Pairing normalisation
---------------------
``pairing_h(Q1, Qbar2) = PAIRING_CONSTANT * alpha * beta_bar / lam^3`` with
``PAIRING_CONSTANT = 16``.  The naive dual-metric value ``(2/lam)^3`` (constant 8)
makes the connection of :mod:`hitlab.connections` non-flat at solutions of
the Wang equation; 16 is the value for which flatness and ``G = 0`` coincide given the
``1/sqrt(2)`` and ``4/sqrt(2)`` corner entries of the connection.  See
``hitlab.connections``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numerics import SparseOperator, smallest_singular_subspace
from .surface import fit_weights, lam0, mobius, mobius_derivative, patches

__all__ = [
    "PAIRING_CONSTANT",
    "NAIVE_PAIRING_CONSTANT",
    "KernelGapFailure",
    "DifferentialField",
    "dbar_operator",
    "dbar_kernel",
    "holomorphic_basis",
    "pairing_h",
    "conjugate",
    "cocycle_residual",
    "save_basis",
    "load_basis",
]

PAIRING_CONSTANT = 16.0
NAIVE_PAIRING_CONSTANT = 8.0
STENCIL_DEGREE = 5
STENCIL_RINGS = 2
GAP_FAILURE = 10.0


class KernelGapFailure(RuntimeError):
    pass


@dataclass
class DifferentialField:
    """``values * dz^weight`` (chirality ``"dz"``) or ``values * dzbar^weight``."""

    weight: int
    values: np.ndarray
    chirality: str = "dz"

    def __post_init__(self):
        if self.chirality not in ("dz", "dzbar"):
            raise ValueError("chirality must be 'dz' or 'dzbar'")
        self.values = np.asarray(self.values, dtype=complex)

    def chart_values(self, mesh):
        """Coefficient at every mesh copy, each in its own chart."""
        if self.chirality == "dz":
            return mesh.expand(self.values, p=self.weight)
        return mesh.expand(self.values, q=self.weight)

    def __add__(self, other):
        self._check(other)
        return DifferentialField(self.weight, self.values + other.values, self.chirality)

    def __sub__(self, other):
        self._check(other)
        return DifferentialField(self.weight, self.values - other.values, self.chirality)

    def __mul__(self, s):
        return DifferentialField(self.weight, self.values * s, self.chirality)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def _check(self, other):
        if (self.weight, self.chirality) != (other.weight, other.chirality):
            raise ValueError("differentials of different type")

    @classmethod
    def zeros(cls, mesh, weight, chirality="dz"):
        return cls(weight, np.zeros(mesh.n_dof, dtype=complex), chirality)


def conjugate(field):
    return DifferentialField(field.weight, np.conj(field.values),
                             "dzbar" if field.chirality == "dz" else "dz")


def pairing_h(Q1, Qbar2, mesh, lam=None, constant=PAIRING_CONSTANT):
    """Metric pairing of a cubic and a conjugate-cubic differential, per dof.

    ``lam`` is the metric density at each dof's representative (defaults to
    ``lam0``).
    """
    if Q1.chirality != "dz" or Qbar2.chirality != "dzbar":
        raise ValueError("pairing_h takes (dz^3, dzbar^3) fields")
    if Q1.weight != Qbar2.weight:
        raise ValueError("weights differ")
    if lam is None:
        lam = mesh.rep_lam0
    return constant * Q1.values * Qbar2.values / lam ** Q1.weight


# ---------------------------------------------------------------------------
# d-bar stencils

def _dbar_stencils(mesh, deg=STENCIL_DEGREE, rings=STENCIL_RINGS):
    """Least-squares polynomial d/dzbar stencils at triangle centroids.

    Returns (row, dof, weight, ratio): the operator on k-differentials is
    ``sum weight * ratio^k * alpha_rep[dof]`` where ``ratio`` converts the
    representative-chart coefficient into the triangle's chart.
    """
    key = ("dbar_stencils", deg, rings)
    if key in mesh._cache:
        return mesh._cache[key]
    t_idx, v_idx, m_idx, transforms = patches(mesh, "triangle", rings)
    M = transforms[m_idx]
    z = mesh.vertices[v_idx]
    zeta = mobius(M, z)
    ratio = mesh.jac[v_idx] / mobius_derivative(M, z)
    tri_z = mesh.vertices[mesh.triangles]
    centre = tri_z.mean(axis=1)
    h = np.abs(tri_z - centre[:, None]).max(axis=1)
    x = (zeta - centre[t_idx]) / h[t_idx]
    (weight,) = fit_weights(t_idx, x, h, deg, [(0, 1)])
    result = (t_idx, mesh.dof[v_idx], weight, ratio)
    mesh._cache[key] = result
    return result


def dbar_operator(mesh, k, chirality="dz"):
    """d/dzbar on dz^k fields (dofs -> triangles), cocycle-corrected.

    For ``chirality="dzbar"`` the operator is d/dz acting on dzbar^k fields
    (the complex conjugate stencil).
    """
    if k not in (2, 3):
        raise ValueError("weight must be 2 or 3")
    t_idx, dof, weight, ratio = _dbar_stencils(mesh)
    vals = weight * ratio ** k
    if chirality == "dzbar":
        vals = np.conj(vals)
    return SparseOperator((len(mesh.triangles), mesh.n_dof), t_idx, dof, vals)


def _weights(mesh, k):
    dom = mesh.mass * mesh.rep_lam0 ** (-k)
    zc = mesh.vertices[mesh.triangles].mean(axis=1)
    rng = mesh.tri_area * lam0(zc) ** (-k)
    return dom, rng


def expected_dimension(k, genus=2):
    return (2 * k - 1) * (genus - 1)


@dataclass
class KernelReport:
    weight: int
    singular_values: np.ndarray
    next_singular_values: np.ndarray
    fields: list

    @property
    def gap_ratio(self):
        return float(self.next_singular_values[0] / self.singular_values[-1])


def dbar_kernel(mesh, k, dim=None, extra=4):
    """Near-kernel of the weighted d-bar operator on dz^k fields."""
    dim = expected_dimension(k) if dim is None else dim
    A = dbar_operator(mesh, k).matrix
    wd, wr = _weights(mesh, k)
    B = sp.diags(np.sqrt(wr)) @ A @ sp.diags(1.0 / np.sqrt(wd))
    sig, V, nxt = smallest_singular_subspace(B, dim, extra=extra)
    alphas = V / np.sqrt(wd)[:, None]
    fields = _canonical_basis(mesh, k, alphas, wd)
    return KernelReport(k, sig, nxt, fields)


def _canonical_basis(mesh, k, alphas, wd):
    """Orthonormal basis of span(alphas), fixed independently of the
    eigensolver's choice: Gram-Schmidt of the projections of z^j."""
    G = alphas.conj().T @ (wd[:, None] * alphas)
    # orthonormalise alphas first
    Lc = np.linalg.cholesky(G)
    Q = alphas @ np.linalg.inv(Lc).conj().T
    z = mesh.rep_z
    dim = Q.shape[1]
    refs = np.stack([z ** j for j in range(dim + 4)], axis=1)
    coeffs = Q.conj().T @ (wd[:, None] * refs)
    proj = Q @ coeffs
    basis = []
    for j in range(proj.shape[1]):
        v = proj[:, j].copy()
        for b in basis:
            v -= b * np.sum(wd * np.conj(b) * v)
        nrm = np.sqrt(np.sum(wd * np.abs(v) ** 2))
        if nrm > 1e-6 * np.sqrt(np.sum(wd * np.abs(proj[:, j]) ** 2)):
            basis.append(v / nrm)
        if len(basis) == dim:
            break
    if len(basis) < dim:
        # fall back to the eigen basis for the remaining directions
        for j in range(dim):
            v = Q[:, j].copy()
            for b in basis:
                v -= b * np.sum(wd * np.conj(b) * v)
            nrm = np.sqrt(np.sum(wd * np.abs(v) ** 2))
            if nrm > 1e-6:
                basis.append(v / nrm)
            if len(basis) == dim:
                break
    # second pass for orthonormality to round-off
    out = []
    for v in basis:
        for b in out:
            v = v - b * np.sum(wd * np.conj(b) * v)
        out.append(v / np.sqrt(np.sum(wd * np.abs(v) ** 2)))
    fields = [DifferentialField(k, v, "dz") for v in out]
    return fields


def holomorphic_basis(mesh, k):
    """Orthonormal basis of holomorphic dz^k differentials (3 for k=2, 5 for k=3).

    Orthonormal for ``sum mass * lam0^-k * alpha * conj(beta)``, the
    discrete ``int alpha conj(beta) lam0^(1-k) dx dy``.
    """
    if mesh.level < 2:
        raise ValueError("holomorphic_basis needs mesh level >= 2")
    rep = dbar_kernel(mesh, k)
    if rep.gap_ratio < GAP_FAILURE:
        raise KernelGapFailure(f"singular-value gap {rep.gap_ratio:.2f} below {GAP_FAILURE}")
    return rep.fields


def l2_inner(mesh, f, g):
    """Weighted L2 pairing of two fields of the same type."""
    f._check(g)
    wd = mesh.mass * mesh.rep_lam0 ** (-f.weight)
    return np.sum(wd * f.values * np.conj(g.values))


def dbar_residual(mesh, field):
    """Weighted norm of d-bar(field) relative to the field's weighted norm."""
    k = field.weight
    wd, wr = _weights(mesh, k)
    r = dbar_operator(mesh, k, field.chirality) @ field.values
    return float(np.sqrt(np.sum(wr * np.abs(r) ** 2) / np.sum(wd * np.abs(field.values) ** 2)))


def cocycle_residual(mesh, field):
    """Max over glued boundary copies of |alpha(gz) g'(z)^k - alpha(z)|, using
    chart values (exact by construction, up to round-off)."""
    vals = field.chart_values(mesh)
    maps = mesh.domain.side_maps
    worst = 0.0
    for a, b, a2, b2, k in mesh.boundary_pairs:
        g = maps[k]
        for src, dst in ((a, b2), (b, a2)):
            gp = mobius_derivative(g, mesh.vertices[src])
            if field.chirality == "dzbar":
                gp = np.conj(gp)
            worst = max(worst, abs(vals[dst] * gp ** field.weight - vals[src]))
    return worst


# ---------------------------------------------------------------------------
# export

def save_basis(fields, mesh, path):
    """Structured-text (JSON) export; floats as hex strings for bit-exact reload."""
    recs = []
    for f in fields:
        recs.append({
            "weight": f.weight,
            "chirality": f.chirality,
            "re": [float(x).hex() for x in f.values.real],
            "im": [float(x).hex() for x in f.values.imag],
        })
    doc = {"format": "hitlab-basis", "version": 1, "mesh_checksum": mesh.checksum(),
           "mesh_level": mesh.level, "n_dof": mesh.n_dof, "fields": recs}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_basis(path, mesh=None):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "hitlab-basis":
        raise ValueError("not a basis file")
    if mesh is not None and doc["mesh_checksum"] != mesh.checksum():
        raise ValueError("basis was computed on a different mesh")
    fields = []
    for r in doc["fields"]:
        vals = np.array([float.fromhex(x) for x in r["re"]]) \
            + 1j * np.array([float.fromhex(x) for x in r["im"]])
        fields.append(DifferentialField(r["weight"], vals, r["chirality"]))
    return fields
