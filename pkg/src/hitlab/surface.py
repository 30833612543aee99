"""Bolza genus-2 surface: regular octagon in the Poincare disk, its side
pairings, a nested triangulation glued along paired sides, and the discrete
operators (Laplace-Beltrami, d/dz, d/dzbar, quadrature) on the quotient.

Conventions
-----------
* Hyperbolic metric ``lam0 |dz|^2`` with ``lam0 = 4 / (1 - |z|^2)^2`` (curvature -1).
* Laplacian ``Delta = (4 / lam0) d_z d_zbar``; ``Delta u <= 0`` pairing.
* Disk isometries are SU(1,1) matrices ``[[a, b], [conj(b), conj(a)]]``
  acting by ``z -> (a z + b) / (conj(b) z + conj(a))``.
* Every mesh vertex is a *copy*; copies glued by side pairings share one
  degree of freedom (dof).  ``to_rep[v]`` is the Mobius map taking copy ``v``
  to the representative copy of its dof.
"""

from __future__ import annotations

import hashlib
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .numerics import SparseOperator

__all__ = [
    "MeshQualityFailure",
    "FuchsianDomain",
    "Mesh",
    "build_bolza_domain",
    "build_mesh",
    "laplacian",
    "derivative_operators",
    "integrate",
    "mobius",
    "mobius_derivative",
    "cayley_to_real",
    "save_mesh",
    "load_mesh",
    "lam0",
    "dlog_lam0",
    "BASE_REFINEMENTS",
    "commutator_relation_word",
]

GENUS = 2
# refinements of the 8-triangle fan that make up "level 0"
BASE_REFINEMENTS = 2
MESH_FILE_VERSION = 1


class MeshQualityFailure(RuntimeError):
    pass


def lam0(z):
    """Hyperbolic density 4 / (1 - |z|^2)^2."""
    return 4.0 / (1.0 - np.abs(z) ** 2) ** 2


def dlog_lam0(z):
    """d_z log lam0 = 2 conj(z) / (1 - |z|^2)."""
    return 2.0 * np.conj(z) / (1.0 - np.abs(z) ** 2)


def mobius(M, z):
    M = np.asarray(M)
    return (M[..., 0, 0] * z + M[..., 0, 1]) / (M[..., 1, 0] * z + M[..., 1, 1])


def mobius_derivative(M, z):
    M = np.asarray(M)
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return det / (M[..., 1, 0] * z + M[..., 1, 1]) ** 2


def _su11_translation(theta, dist):
    """Hyperbolic translation by ``dist`` along the diameter at angle ``theta``."""
    c, s = np.cosh(dist / 2), np.sinh(dist / 2)
    T = np.array([[c, s], [s, c]], dtype=complex)
    R = np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])
    return R @ T @ np.linalg.inv(R)


_CAYLEY = np.array([[1, -1j], [1, 1j]], dtype=complex)  # upper half plane -> disk


def cayley_to_real(M):
    """Conjugate an SU(1,1) matrix to the upper half-plane model (SL(2,R))."""
    C = _CAYLEY / np.sqrt(2j)
    R = np.linalg.inv(C) @ M @ C
    if np.abs(R.imag).max() > 1e-9 * max(1.0, np.abs(R).max()):
        raise ValueError("matrix is not an SU(1,1) isometry")
    return R.real


def _hyp_midpoint(a, b):
    """Geodesic midpoint of two points of the Poincare disk."""
    w = (b - a) / (1 - np.conj(a) * b)
    r = np.abs(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(r > 0, w / np.where(r > 0, r, 1) * np.tanh(np.arctanh(r) / 2), 0)
    return (m + a) / (1 + np.conj(a) * m)


@dataclass
class FuchsianDomain:
    """Regular octagon with angles pi/4 and its four side pairings.

    ``vertices[j]`` sits at angle ``pi/8 + j pi/4``; side ``k`` joins
    ``vertices[k-1]`` and ``vertices[k]`` and faces direction ``k pi/4``.
    ``generators[k]`` (k = 0..3) maps side ``k + 4`` onto side ``k``.
    """

    vertices: np.ndarray
    generators: np.ndarray  # (4, 2, 2) SU(1,1)
    translation_length: float
    relation: tuple = ()
    symplectic: dict = field(default_factory=dict)

    @property
    def side_maps(self):
        """Map index -> matrix, for the 8 directed side pairings (g_k and g_k^-1)."""
        g = list(self.generators)
        return g + [np.linalg.inv(m) for m in g]

    def real_generators(self):
        return np.array([cayley_to_real(g) for g in self.generators])

    def word_matrix(self, word):
        """Evaluate a word such as ``(0, -2, 1)`` (index k+1 for g_k, negative for inverse)."""
        M = np.eye(2, dtype=complex)
        for letter in word:
            g = self.generators[abs(letter) - 1]
            M = M @ (g if letter > 0 else np.linalg.inv(g))
        return M

    def interior_angle(self, j):
        """Hyperbolic (= Euclidean, conformal model) angle at vertex j between its two sides."""
        v = self.vertices[j]
        prev_v = self.vertices[j - 1]
        next_v = self.vertices[(j + 1) % 8]
        return _geodesic_angle(v, prev_v, next_v)


def _geodesic_tangent(a, b):
    """Unit tangent at ``a`` of the geodesic from ``a`` to ``b``."""
    w = (b - a) / (1 - np.conj(a) * b)
    # derivative of the inverse Mobius map at 0 is (1 - |a|^2)
    t = w * (1 - np.abs(a) ** 2)
    return t / np.abs(t)


def _geodesic_angle(v, p, q):
    t1 = _geodesic_tangent(v, p)
    t2 = _geodesic_tangent(v, q)
    return abs(np.angle(t2 / t1))


def build_bolza_domain():
    """Regular hyperbolic octagon with interior angle pi/4 (Bolza surface)."""
    # cosh(circumradius) = cot(pi/8)^2 and tanh(R/2)^2 = 1/sqrt(2)
    r = 2.0 ** -0.25
    verts = r * np.exp(1j * (np.pi / 8 + np.arange(8) * np.pi / 4))
    inradius = np.arccosh(1.0 / np.tan(np.pi / 8))
    ell = 2.0 * inradius
    gens = np.array([_su11_translation(k * np.pi / 4, ell) for k in range(4)])
    dom = FuchsianDomain(vertices=verts, generators=gens, translation_length=ell)
    dom.relation = _find_relation(dom)
    dom.symplectic = _find_commutator_generators(dom)
    return dom


def _is_pm_identity(M, tol=1e-9):
    return min(np.abs(M - np.eye(2)).max(), np.abs(M + np.eye(2)).max()) < tol


def _freely_reduced(word):
    return all(word[i] != -word[(i + 1) % len(word)] for i in range(len(word)))


def _find_relation(dom):
    """The defining relation: a cyclically reduced word using each g_k and
    g_k^-1 once that evaluates to +-identity."""
    letters = [1, 2, 3, 4, -1, -2, -3, -4]
    for perm in itertools.permutations(letters[1:]):
        word = (letters[0],) + perm
        if _freely_reduced(word) and _is_pm_identity(dom.word_matrix(word)):
            return word
    raise RuntimeError("no relation word found for the octagon pairings")


# Rewriting g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3 as [a, b][c, d].
_COMMUTATOR_WORDS = {"a": (1,), "b": (-2, 3, -4), "c": (-2, 3), "d": (-4, 2)}


def _find_commutator_generators(dom):
    """Words a, b, c, d in the side pairings with [a,b][c,d] = +-identity."""
    w = _COMMUTATOR_WORDS
    word = w["a"] + w["b"] + _inverse(w["a"]) + _inverse(w["b"]) \
        + w["c"] + w["d"] + _inverse(w["c"]) + _inverse(w["d"])
    if not _is_pm_identity(dom.word_matrix(word)):
        raise RuntimeError("commutator presentation does not hold for these pairings")
    return dict(w)


def _inverse(word):
    return tuple(-x for x in reversed(word))


def commutator_relation_word(dom):
    """The word aba^-1b^-1cdc^-1d^-1 expanded in the side pairings."""
    w = dom.symplectic
    return w["a"] + w["b"] + _inverse(w["a"]) + _inverse(w["b"]) \
        + w["c"] + w["d"] + _inverse(w["c"]) + _inverse(w["d"])


@dataclass
class Mesh:
    vertices: np.ndarray          # (N,) complex chart coordinates of copies
    triangles: np.ndarray         # (T, 3) int, positively oriented
    level: int
    dof: np.ndarray               # (N,) copy -> dof
    rep: np.ndarray               # (n_dof,) dof -> representative copy
    to_rep: np.ndarray            # (N, 2, 2) Mobius copy -> representative
    boundary_pairs: np.ndarray    # (E, 5): edge a, b, partner a', b', map index
    side_of: np.ndarray           # (N,) side index for boundary copies, -1 interior, 8 corner
    domain: FuchsianDomain = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_dof(self):
        return len(self.rep)

    @property
    def lam0(self):
        return lam0(self.vertices)

    @property
    def tri_area(self):
        """Signed chart area of each triangle."""
        if "tri_area" not in self._cache:
            z = self.vertices[self.triangles]
            e1, e2 = z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]
            self._cache["tri_area"] = 0.5 * np.imag(np.conj(e1) * e2)
        return self._cache["tri_area"]

    @property
    def area_weight(self):
        """Barycentric chart area of each copy (sum of area/3 over incident triangles)."""
        if "area_weight" not in self._cache:
            w = np.zeros(len(self.vertices))
            np.add.at(w, self.triangles.ravel(), np.repeat(self.tri_area / 3.0, 3))
            self._cache["area_weight"] = w
        return self._cache["area_weight"]

    @property
    def mass(self):
        """Hyperbolic area attached to each dof."""
        if "mass" not in self._cache:
            self._cache["mass"] = np.bincount(self.dof, weights=self.area_weight * self.lam0,
                                              minlength=self.n_dof)
        return self._cache["mass"]

    @property
    def rep_z(self):
        return self.vertices[self.rep]

    @property
    def rep_lam0(self):
        return lam0(self.rep_z)

    @property
    def jac(self):
        """Derivative at each copy of the map copy -> representative."""
        if "jac" not in self._cache:
            self._cache["jac"] = mobius_derivative(self.to_rep, self.vertices)
        return self._cache["jac"]

    def expand(self, values, p=0, q=0):
        """Per-dof values (representative chart) -> per-copy chart values for a
        tensor of type dz^p dzbar^q."""
        values = np.asarray(values)
        out = values[self.dof]
        if p or q:
            J = self.jac
            out = out * J ** p * np.conj(J) ** q
        return out

    def interior_copies(self):
        return np.flatnonzero(self.side_of < 0)

    def checksum(self):
        h = hashlib.sha256()
        for arr in (self.vertices, self.triangles, self.dof, self.boundary_pairs):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(self.level).encode())
        return h.hexdigest()[:16]

    def min_angle(self):
        z = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a, b, c = z[:, i], z[:, (i + 1) % 3], z[:, (i + 2) % 3]
            angles.append(np.abs(np.angle((c - a) / (b - a))))
        return np.degrees(np.min(angles))

    def base_vertex(self):
        return int(np.argmin(np.abs(self.vertices)))

    def hyperbolic_area(self):
        return float(self.mass.sum())


def _fan(domain):
    verts = np.concatenate([[0j], domain.vertices])
    tris = np.array([[0, 1 + j, 1 + (j + 1) % 8] for j in range(8)])
    return verts, tris


def _refine(verts, tris):
    edge_mid = {}
    verts = list(verts)
    new_tris = []
    for t in tris:
        mids = []
        for i in range(3):
            a, b = int(t[i]), int(t[(i + 1) % 3])
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                edge_mid[key] = len(verts)
                verts.append(_hyp_midpoint(verts[a], verts[b]))
            mids.append(edge_mid[key])
        a, b, c = (int(x) for x in t)
        ab, bc, ca = mids
        new_tris += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return np.array(verts, dtype=complex), np.array(new_tris, dtype=np.int64)


def _on_side(z, domain, k, tol=1e-9):
    """Whether points z lie on the geodesic carrying side k (circle orthogonal to |z|=1)."""
    a, b = domain.vertices[k - 1], domain.vertices[k % 8]
    # circle through a, b orthogonal to the unit circle: centre c with |c|^2 = 1 + rho^2
    theta = k * np.pi / 4
    d = np.abs(a) ** 2 + 1
    # centre on the bisecting ray: |c - a|^2 = |c|^2 - 1 => 2 Re(conj(c) a) = |a|^2 + 1
    cdist = d / (2 * np.real(np.exp(-1j * theta) * a))
    c = cdist * np.exp(1j * theta)
    rho = np.sqrt(cdist ** 2 - 1)
    return np.abs(np.abs(z - c) - rho) < tol


def build_mesh(domain, level):
    """Nested triangulation of the octagon, refined by geodesic midpoints."""
    if level < 0:
        raise ValueError("level must be >= 0")
    verts, tris = _fan(domain)
    for _ in range(BASE_REFINEMENTS + level):
        verts, tris = _refine(verts, tris)

    N = len(verts)
    side_of = np.full(N, -1, dtype=np.int64)
    on = np.array([_on_side(verts, domain, k) for k in range(8)])  # (8, N)
    counts = on.sum(axis=0)
    for k in range(8):
        side_of[on[k] & (counts == 1)] = k
    side_of[counts >= 2] = 8  # octagon corners

    # boundary edges, by side
    edges = {}
    for t in tris:
        for i in range(3):
            a, b = int(t[i]), int(t[(i + 1) % 3])
            edges[(a, b)] = edges.get((a, b), 0) + 1
    bedges = [(a, b) for (a, b) in edges if (b, a) not in edges]

    maps = domain.side_maps
    parent = list(range(N))
    link = {}  # (copy, other copy) -> Mobius taking copy to other

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def side_of_edge(a, b):
        for k in range(8):
            if on[k, a] and on[k, b]:
                return k
        raise MeshQualityFailure("boundary edge not on an octagon side")

    by_side = {k: [] for k in range(8)}
    for a, b in bedges:
        by_side[side_of_edge(a, b)].append((a, b))

    pairs = []
    for k in range(4):
        g = maps[k]  # side k+4 -> side k
        src = by_side[k + 4]
        dst = by_side[k]
        dst_pts = {}
        for a, b in dst:
            for v in (a, b):
                dst_pts[v] = verts[v]
        dst_idx = np.array(list(dst_pts))
        dst_z = verts[dst_idx]
        vmap = {}
        for a, b in src:
            for v in (a, b):
                if v in vmap:
                    continue
                w = mobius(g, verts[v])
                j = np.argmin(np.abs(dst_z - w))
                if abs(dst_z[j] - w) > 1e-9:
                    raise MeshQualityFailure("side pairing does not map mesh vertices onto mesh vertices")
                vmap[v] = int(dst_idx[j])
        dst_set = set(dst)
        for a, b in src:
            a2, b2 = vmap[a], vmap[b]
            # orientation reverses across a glued edge
            if (b2, a2) not in dst_set:
                raise MeshQualityFailure("identified edges do not match")
            pairs.append((a, b, b2, a2, k))
        for v, w in vmap.items():
            link[(v, w)] = g
            link[(w, v)] = np.linalg.inv(g)
            ra, rb = find(v), find(w)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = np.array([find(i) for i in range(N)])
    rep_list, dof = np.unique(roots, return_inverse=True)
    rep = rep_list.astype(np.int64)
    # Mobius maps copy -> representative, by BFS over the gluing graph
    adj = {}
    for (v, w), g in link.items():
        adj.setdefault(v, []).append((w, g))
    to_rep = np.tile(np.eye(2, dtype=complex), (N, 1, 1))
    for r in rep:
        if r not in adj:
            continue
        seen = {int(r)}
        stack = [int(r)]
        while stack:
            x = stack.pop()
            for y, g in adj.get(x, []):
                if y in seen:
                    continue
                # g maps x -> y, so y -> rep is to_rep[x] @ g^-1
                to_rep[y] = to_rep[x] @ np.linalg.inv(g)
                seen.add(y)
                stack.append(y)

    mesh = Mesh(vertices=verts, triangles=tris, level=level, dof=dof.astype(np.int64),
                rep=rep, to_rep=to_rep, boundary_pairs=np.array(pairs, dtype=np.int64),
                side_of=side_of, domain=domain)
    if np.abs(mobius(to_rep, verts) - verts[rep[dof]]).max() > 1e-9:
        raise MeshQualityFailure("gluing maps are inconsistent")
    if mesh.min_angle() < 15.0:
        raise MeshQualityFailure(f"minimum triangle angle {mesh.min_angle():.2f} deg below 15 deg")
    if np.any(mesh.tri_area <= 0):
        raise MeshQualityFailure("inconsistent triangle orientation")
    return mesh


# ---------------------------------------------------------------------------
# local charts around dofs

def dof_stars(mesh):
    """For each dof, the incident triangles with the Mobius map into the
    representative chart: list of (triangle index, Mobius matrix)."""
    if "stars" in mesh._cache:
        return mesh._cache["stars"]
    stars = [[] for _ in range(mesh.n_dof)]
    for t, tri in enumerate(mesh.triangles):
        for v in tri:
            stars[mesh.dof[v]].append((t, int(v)))
    mesh._cache["stars"] = stars
    return stars


def _tri_cot(z):
    """Cotangents of the angles of triangles z (T, 3) opposite each vertex."""
    cots = np.empty(z.shape, dtype=float)
    for i in range(3):
        a, b, c = z[:, i], z[:, (i + 1) % 3], z[:, (i + 2) % 3]
        u, v = b - a, c - a
        cots[:, i] = np.real(np.conj(u) * v) / np.imag(np.conj(u) * v)
    return cots


def stiffness(mesh):
    """Cotan stiffness S (positive semidefinite) on dofs: u^T S u = int |grad u|^2."""
    if "stiffness" in mesh._cache:
        return mesh._cache["stiffness"]
    tris = mesh.triangles
    cots = _tri_cot(mesh.vertices[tris])
    rows, cols, vals = [], [], []
    for i in range(3):
        a = mesh.dof[tris[:, (i + 1) % 3]]
        b = mesh.dof[tris[:, (i + 2) % 3]]
        w = 0.5 * cots[:, i]
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [-w, -w, w, w]
    n = mesh.n_dof
    S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    S.sum_duplicates()
    mesh._cache["stiffness"] = S
    return S


def laplacian(mesh):
    """Discrete Laplace-Beltrami operator of the hyperbolic metric on dofs.

    ``Delta = -M^{-1} S`` with ``S`` the cotan stiffness and ``M`` the lumped
    hyperbolic mass; self-adjoint for the inner product weighted by
    ``mesh.mass``.
    """
    if "laplacian" not in mesh._cache:
        S = stiffness(mesh)
        L = -sp.diags(1.0 / mesh.mass) @ S
        mesh._cache["laplacian"] = SparseOperator.from_matrix(L)
    return mesh._cache["laplacian"]


def patches(mesh, kind, rings):
    """Copies near each triangle (``kind="triangle"``) or dof (``"dof"``),
    with the Mobius map from each copy's chart into the centre's chart.

    The centre chart of a dof is its representative's.  Returns flat arrays
    ``(centre, copy, transform index)`` and the stacked transforms (index 0 is
    the identity).  Each point of the neighbourhood appears once.
    """
    key = ("patches", kind, rings)
    if key in mesh._cache:
        return mesh._cache[key]
    tris = mesh.triangles
    T = len(tris)
    N = len(mesh.vertices)
    stars = dof_stars(mesh)
    glued = (mesh.side_of >= 0).astype(float)

    rows = np.repeat(np.arange(T), 3)
    inc = sp.csr_matrix((np.ones(3 * T), (rows, tris.ravel())), shape=(T, N))
    adj = (inc.T @ inc).tocsr()
    adj.data[:] = 1.0
    if kind == "triangle":
        reach = inc.copy()
        n_centre = T
    elif kind == "dof":
        n_centre = mesh.n_dof
        reach = sp.csr_matrix((np.ones(n_centre), (np.arange(n_centre), mesh.rep)),
                              shape=(n_centre, N))
    else:
        raise ValueError("kind must be 'triangle' or 'dof'")
    for _ in range(rings):
        reach = reach @ adj
        reach.data[:] = 1.0
    reach = reach.tocsr()
    slow = np.asarray(reach @ glued).ravel() > 0

    out_c, out_v, out_m = [], [], []
    for c in np.flatnonzero(~slow):
        cols = reach.indices[reach.indptr[c]:reach.indptr[c + 1]]
        out_c.append(np.full(len(cols), c))
        out_v.append(cols)
        out_m.append(np.zeros(len(cols), dtype=np.int64))

    transforms = [np.eye(2, dtype=complex)]
    tkeys = {}

    def tindex(M):
        M = M / np.sqrt(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        if M[1, 1].real < 0 or (M[1, 1].real == 0 and M[1, 1].imag < 0):
            M = -M
        k = tuple(np.round(M.ravel(), 7))
        if k not in tkeys:
            tkeys[k] = len(transforms)
            transforms.append(M)
        return tkeys[k]

    inv_rep = np.linalg.inv(mesh.to_rep)
    for c in np.flatnonzero(slow):
        if kind == "triangle":
            seen = {int(c): np.eye(2, dtype=complex)}
            todo = rings
        else:
            seen = {int(t): mesh.to_rep[v] for t, v in stars[c]}
            todo = rings - 1
        frontier = list(seen.items())
        for _ in range(todo):
            nxt = []
            for tt, M in frontier:
                for v in tris[tt]:
                    Mi = M @ inv_rep[v]
                    for t2, v2 in stars[mesh.dof[v]]:
                        if t2 in seen:
                            continue
                        M2 = Mi @ mesh.to_rep[v2]
                        seen[t2] = M2
                        nxt.append((t2, M2))
            frontier = nxt
        pts = {}
        for t2, M in seen.items():
            ti = tindex(M)
            for w in tris[t2]:
                zeta = mobius(M, mesh.vertices[w])
                k = (int(mesh.dof[w]), round(zeta.real, 8), round(zeta.imag, 8))
                if k not in pts:
                    pts[k] = (int(w), ti)
        out_c.append(np.full(len(pts), c))
        out_v.append(np.array([p[0] for p in pts.values()]))
        out_m.append(np.array([p[1] for p in pts.values()]))
    result = (np.concatenate(out_c), np.concatenate(out_v), np.concatenate(out_m),
              np.array(transforms))
    mesh._cache[key] = result
    return result


def monomials(deg):
    return [(a, b) for a in range(deg + 1) for b in range(deg + 1) if a + b <= deg]


def fit_weights(centre_idx, x, scale, deg, targets):
    """Least-squares polynomial stencils.

    ``x`` holds patch points relative to their centre, divided by
    ``scale[centre]``.  For each target monomial ``(a, b)`` returns the
    per-point weights of the fitted coefficient of ``zeta^a zetabar^b``
    (rescaled back to chart units).  Patches of equal size are solved as one
    batch.
    """
    mons = monomials(deg)
    pa = np.array([a for a, _ in mons])
    pb = np.array([b for _, b in mons])
    tix = [mons.index(t) for t in targets]
    out = [np.empty(len(x), dtype=complex) for _ in targets]
    order = np.argsort(centre_idx, kind="stable")
    srt = centre_idx[order]
    cut = np.flatnonzero(np.diff(srt)) + 1
    starts = np.concatenate([[0], cut])
    ends = np.concatenate([cut, [len(srt)]])
    sizes = ends - starts
    for size in np.unique(sizes):
        sel = np.flatnonzero(sizes == size)
        pos = order[starts[sel][:, None] + np.arange(size)[None, :]]
        X = x[pos]
        V = X[..., None] ** pa * np.conj(X[..., None]) ** pb
        P = np.linalg.pinv(V)
        h = scale[srt[starts[sel]]][:, None]
        for o, ti, (a, b) in zip(out, tix, targets):
            o[pos.ravel()] = (P[:, ti, :] / h ** (a + b)).ravel()
    return out


DERIV_DEGREE = 3
DERIV_RINGS = 2


def derivative_operators(mesh, deg=DERIV_DEGREE, rings=DERIV_RINGS):
    """Vertex d/dz and d/dzbar of scalar functions on dofs.

    Least-squares fit of a polynomial of degree ``deg`` in (z, zbar) over
    the ``rings``-ring neighbourhood of each dof, in its representative
    chart.  Exact on polynomials up to that degree, in particular on affine
    functions.  Returns two sparse (n_dof x n_dof) matrices ``(Dz, Dzb)``.
    """
    key = ("dz_ops", deg, rings)
    if key in mesh._cache:
        return mesh._cache[key]
    c_idx, v_idx, m_idx, transforms = patches(mesh, "dof", rings)
    zeta = mobius(transforms[m_idx], mesh.vertices[v_idx])
    centre = mesh.rep_z
    x = zeta - centre[c_idx]
    h = np.zeros(mesh.n_dof)
    np.maximum.at(h, c_idx, np.abs(x))
    wz, wzb = fit_weights(c_idx, x / h[c_idx], h, deg, [(1, 0), (0, 1)])
    n = mesh.n_dof
    cols = mesh.dof[v_idx]
    Dz = sp.csr_matrix((wz, (c_idx, cols)), shape=(n, n))
    Dzb = sp.csr_matrix((wzb, (c_idx, cols)), shape=(n, n))
    Dz.sum_duplicates()
    Dzb.sum_duplicates()
    mesh._cache[key] = (Dz, Dzb)
    return Dz, Dzb


def integrate(mesh, f, measure="hyperbolic"):
    """Barycentric quadrature of per-copy values ``f`` (length = number of copies).

    ``measure="chart"`` integrates ``f dx dy`` in each copy's chart;
    ``"hyperbolic"`` integrates ``f lam0 dx dy``.  Per-dof values of scalar
    functions can be passed directly (length ``n_dof``).
    """
    f = np.asarray(f)
    if f.shape[0] == mesh.n_dof and f.shape[0] != len(mesh.vertices):
        f = f[mesh.dof]
    if f.shape[0] != len(mesh.vertices):
        raise ValueError("f must be sampled at every mesh vertex")
    w = mesh.area_weight
    if measure == "hyperbolic":
        w = w * mesh.lam0
    elif measure != "chart":
        raise ValueError("measure must be 'chart' or 'hyperbolic'")
    return np.sum(w * f)


# ---------------------------------------------------------------------------
# cache file

def save_mesh(mesh, path):
    """Write the mesh to a versioned ``.npz`` archive (bit-exact)."""
    buf = io.BytesIO()
    np.savez(buf, version=np.array(MESH_FILE_VERSION), level=np.array(mesh.level),
             base_refinements=np.array(BASE_REFINEMENTS),
             vertices=mesh.vertices, triangles=mesh.triangles, dof=mesh.dof, rep=mesh.rep,
             to_rep=mesh.to_rep, boundary_pairs=mesh.boundary_pairs, side_of=mesh.side_of)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_mesh(path, domain=None):
    with np.load(path) as data:
        if int(data["version"]) != MESH_FILE_VERSION:
            raise ValueError(f"unsupported mesh file version {int(data['version'])}")
        mesh = Mesh(vertices=data["vertices"], triangles=data["triangles"],
                    level=int(data["level"]), dof=data["dof"], rep=data["rep"],
                    to_rep=data["to_rep"], boundary_pairs=data["boundary_pairs"],
                    side_of=data["side_of"], domain=domain or build_bolza_domain())
    return mesh
