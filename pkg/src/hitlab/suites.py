"""Verification suites run by ``hitlab verify-all``.

Each suite returns a :class:`SuiteReport` holding named checks (value,
threshold, comparison) and refinement series.  Refinement studies compare
two consecutive levels ``(a, a + 1)`` with ``a = max(level - 1, 2)``, the
smallest pair on which both holomorphic bases exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import connections as cn
from . import goldman as gm
from .differentials import (DifferentialField, cocycle_residual, conjugate, dbar_kernel,
                            dbar_residual, expected_dimension, GAP_FAILURE)
from .surface import build_bolza_domain, build_mesh, commutator_relation_word, lam0
from .wang import linearize_L, residual_G, solve_wang

__all__ = ["Check", "SuiteReport", "Workspace", "SUITES", "run_suite"]


@dataclass
class Check:
    name: str
    operation: str
    claim: str
    value: float
    threshold: float
    comparison: str = "<="

    @property
    def passed(self):
        v, t = self.value, self.threshold
        if not np.isfinite(v):
            return False
        return {"<=": v <= t, ">=": v >= t, "==": v == t}[self.comparison]

    def to_dict(self):
        return {"name": self.name, "operation": self.operation, "claim": self.claim,
                "value": float(self.value), "threshold": float(self.threshold),
                "comparison": self.comparison, "passed": bool(self.passed)}

    def describe(self):
        state = "PASS" if self.passed else "FAIL"
        return (f"{state} {self.operation}: {self.name} = {self.value:.6g} "
                f"(need {self.comparison} {self.threshold:.6g}; {self.claim})")


@dataclass
class SuiteReport:
    suite: str
    level: int
    checks: list = field(default_factory=list)
    series: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    error: str = ""

    @property
    def passed(self):
        return not self.error and all(c.passed for c in self.checks)

    def check(self, name, operation, claim, value, threshold, comparison="<="):
        c = Check(name, operation, claim, float(value), float(threshold), comparison)
        self.checks.append(c)
        return c

    def record(self, metric, level, value, param=None, tracked=True):
        """Add a series point; ``tracked`` marks error-like metrics expected to
        shrink under refinement."""
        self.series.append({"metric": metric, "level": int(level),
                            "param": "" if param is None else float(param),
                            "value": float(value), "tracked": bool(tracked)})

    def to_dict(self):
        return {"suite": self.suite, "level": self.level, "passed": self.passed,
                "error": self.error, "checks": [c.to_dict() for c in self.checks],
                "series": self.series, "data": self.data}


def _ratio(coarse, fine):
    if fine == 0.0:
        return math.inf if coarse > 0 else 1.0
    return coarse / fine


class Workspace:
    """Lazily built meshes, bases and Fuchsian solutions shared between suites."""

    def __init__(self, config):
        self.config = config
        self.domain = build_bolza_domain()
        self._mesh = {}
        self._basis = {}
        self._sigma0 = {}
        self._solved = {}

    @property
    def level(self):
        return self.config.level

    @property
    def pair(self):
        a = max(self.level - 1, 2)
        return a, a + 1

    def mesh(self, level):
        if level not in self._mesh:
            self._mesh[level] = build_mesh(self.domain, level)
        return self._mesh[level]

    def kernel(self, level, k):
        if (level, k) not in self._basis:
            self._basis[level, k] = dbar_kernel(self.mesh(level), k)
        return self._basis[level, k]

    def basis(self, level, k):
        rep = self.kernel(level, k)
        if rep.gap_ratio < GAP_FAILURE:
            from .differentials import KernelGapFailure
            raise KernelGapFailure(f"level {level} k={k}: gap {rep.gap_ratio:.2f}")
        return rep.fields

    def sigma0(self, level):
        if level not in self._sigma0:
            m = self.mesh(level)
            self._sigma0[level] = solve_wang(m, DifferentialField.zeros(m, 3),
                                             tol=self.config.newton_tol)
        return self._sigma0[level]

    def cubic_data(self, level, scale=1.0):
        """The configured cubic differential: sum amplitude * basis[index]."""
        B = self.basis(level, 3)
        Q = DifferentialField.zeros(self.mesh(level), 3)
        for idx, amp in zip(self.config.q_index, self.config.q_amplitude):
            Q = Q + B[idx] * (amp * scale)
        return Q

    def solved(self, level, scale=1.0):
        key = (level, scale)
        if key not in self._solved:
            c = self.config
            self._solved[key] = solve_wang(self.mesh(level), self.cubic_data(level, scale),
                                           steps=c.continuation_steps, tol=c.newton_tol,
                                           constant=c.pairing_constant)
        return self._solved[key]


def _rms(mesh, r):
    w = mesh.tri_area * lam0(mesh.vertices[mesh.triangles].mean(axis=1))
    return float(np.sqrt(np.sum(w * r ** 2) / np.sum(w)))


def _word_tolerance(word, coarse, fine):
    """Accumulated tolerance for |H(word) - I|: each letter contributes its
    generator error amplified by one matrix norm.

    The generator error at the fine level is estimated as |H_c - H_f| / 3
    (transport errors shrink by 4 per level; base point and frame agree
    across levels).
    """
    total = 0.0
    for letter in word:
        k = abs(letter) - 1
        e = np.abs(coarse[k] - fine[k]).max() / 3
        M = fine[k] if letter > 0 else np.linalg.inv(fine[k])
        total += e * np.abs(M).max()
    return float(total)


# ---------------------------------------------------------------------------

def suite_mesh(ws):
    rep = SuiteReport("mesh", ws.level)
    m = ws.mesh(ws.level)
    op = "surface.build_mesh"
    edges = set()
    for t in m.dof[m.triangles]:
        for i in range(3):
            a, b = t[i], t[(i + 1) % 3]
            edges.add((min(a, b), max(a, b)))
    chi = m.n_dof - len(edges) + len(m.triangles)
    rep.check("euler_characteristic", op, "closed genus-2 surface", chi, -2, "==")
    area_err = abs(m.hyperbolic_area() - 4 * math.pi) / (4 * math.pi)
    rep.check("area_relative_error", op, "hyperbolic area 4 pi", area_err, 0.05)
    rep.check("min_angle_deg", op, "non-degenerate triangles", m.min_angle(), 15.0, ">=")
    rep.data.update({"n_dof": m.n_dof, "n_copies": len(m.vertices),
                     "n_triangles": len(m.triangles), "checksum": m.checksum()})
    rep.record("area_relative_error", ws.level, area_err)
    return rep


def suite_basis(ws):
    rep = SuiteReport("basis", ws.level)
    op = "differentials.holomorphic_basis"
    a, b = ws.pair
    for level in sorted({a, b, ws.level}):
        for k in (2, 3):
            kr = ws.kernel(level, k)
            gap = kr.gap_ratio
            rep.record(f"dbar_gap_k{k}", level, gap, tracked=False)
            dim = len(kr.fields)
            rep.check(f"dimension_k{k}_L{level}", op, "dimension (2k - 1)(g - 1)", dim,
                      expected_dimension(k), "==")
            need = 1e3 if level >= 3 else GAP_FAILURE
            rep.check(f"gap_ratio_k{k}_L{level}", op, "isolated kernel", gap, need, ">=")
            m = ws.mesh(level)
            res = max(dbar_residual(m, f) for f in kr.fields)
            rep.record(f"dbar_residual_k{k}", level, res)
            coc = max(cocycle_residual(m, f) for f in kr.fields)
            rep.check(f"cocycle_residual_k{k}_L{level}", op, "transforms as a k-differential",
                      coc, 1e-10)
    for k in (2, 3):
        ra = [s["value"] for s in rep.series if s["metric"] == f"dbar_residual_k{k}"
              and s["level"] == a][0]
        rb = [s["value"] for s in rep.series if s["metric"] == f"dbar_residual_k{k}"
              and s["level"] == b][0]
        rep.check(f"dbar_residual_decrease_k{k}", op, "d-bar residual shrinks under refinement",
                  _ratio(ra, rb), 2.0, ">=")
    return rep


def suite_fuchsian(ws):
    rep = SuiteReport("fuchsian", ws.level)
    a, b = ws.pair
    s0 = ws.sigma0(ws.level)
    op = "wang.solve_wang"
    rep.check("newton_steps_Q0", op, "Q = 0 is solved by u = 0", s0.report["newton_steps"], 1,
              "<=")
    rep.check("max_abs_u_Q0", op, "Q = 0 is solved by u = 0", np.abs(s0.u).max(), 1e-12)

    # holonomy against the symmetric square of the Fuchsian generators
    expected = 1 + 2 * math.cosh(ws.domain.translation_length)
    errs, rels, gens = {}, {}, {}
    for level in (a, b):
        D = cn.assemble_D(ws.sigma0(level))
        H = cn.loop_holonomies(D)
        gens[level] = H
        tr = np.array([np.trace(h) for h in H])
        errs[level] = float(np.abs(tr - expected).max() / expected)
        rel = cn.holonomy(D, ws.domain.relation).matrix
        rels[level] = float(np.abs(rel - np.eye(3)).max())
        rep.record("holonomy_trace_rel_error", level, errs[level])
        rep.record("relation_word_deviation", level, rels[level])
        D0 = cn.assemble_D0(ws.sigma0(level))
        tr0 = np.array([np.trace(h) for h in cn.loop_holonomies(D0)])
        rep.check(f"gauge_invariance_L{level}", "connections.assemble_D0",
                  "holonomy traces are gauge invariant", np.abs(tr - tr0).max(), 1e-7)
    op = "connections.holonomy"
    rep.check("holonomy_trace_rel_error", op, "trace 1 + 2 cosh(length)", errs[b], 0.02)
    rep.check("holonomy_error_decrease", op, "trace error shrinks under refinement",
              _ratio(errs[a], errs[b]), 2.0, ">=")
    tol = _word_tolerance(ws.domain.relation, gens[a], gens[b])
    rep.data["relation_tolerance"] = tol
    rep.check("relation_word_deviation", op, "relation word is the identity", rels[b], tol)
    rep.check("relation_word_decrease", op, "relation defect shrinks under refinement",
              _ratio(rels[a], rels[b]), 2.0, ">=")

    # flatness at the Fuchsian point and under a constant shift of u
    op = "connections.curvature_residual"
    cf, cp = {}, {}
    for level in (a, b):
        s = ws.sigma0(level)
        cf[level] = float(cn.curvature_residual(cn.assemble_D(s)).max())
        cp[level] = float(cn.curvature_residual(
            cn.assemble_D(s.with_u(s.u + 0.01), check=False)).max())
        rep.record("curvature_fuchsian_max", level, cf[level])
        rep.record("curvature_shifted_max", level, cp[level], tracked=False)
    rep.check("curvature_fuchsian_decrease", op, "flat where G = 0", _ratio(cf[a], cf[b]), 2.0,
              ">=")
    rep.check("curvature_shifted_ratio", op, "not flat where G != 0", _ratio(cp[a], cp[b]), 1.5,
              "<=")

    # closed forms at the Fuchsian point
    m = ws.mesh(ws.level)
    s = ws.sigma0(ws.level)
    Bq, Bc = ws.basis(ws.level, 2), ws.basis(ws.level, 3)
    worst_pt, worst_int = 0.0, 0.0
    l0 = lam0(m.vertices)
    w = m.area_weight
    cases = []
    for p in Bq:
        for q in Bq:
            T1 = cn.fuchsian_tangent(s, "c1", conjugate(p))
            T2 = cn.fuchsian_tangent(s, "c2", q)
            cases.append((T1, T2, -np.conj(p.chart_values(m)) * q.chart_values(m) / l0))
    for p in Bc:
        for q in Bc:
            T1 = cn.fuchsian_tangent(s, "Q1", p)
            T2 = cn.fuchsian_tangent(s, "Q2", conjugate(q))
            cases.append((T1, T2, 2 * p.chart_values(m) * np.conj(q.chart_values(m)) / l0 ** 2))
    mixed = []
    for p in Bq:
        for q in Bc:
            for k1, f1 in (("c1", conjugate(p)), ("c2", p)):
                for k2, f2 in (("Q1", q), ("Q2", conjugate(q))):
                    mixed.append((cn.fuchsian_tangent(s, k1, f1), cn.fuchsian_tangent(s, k2, f2)))
    scale = 0.0
    for T1, T2, integrand in cases:
        wt = gm.wedge_trace(T1, T2)
        worst_pt = max(worst_pt, float(np.abs(wt - integrand).max() / np.abs(integrand).max()))
        val = gm.pair_omega(T1, T2)
        ref = -2j * np.sum(w * integrand)
        scale = max(scale, abs(ref))
        worst_int = max(worst_int, abs(val - ref))
    worst_mixed = max(abs(gm.pair_omega(T1, T2)) for T1, T2 in mixed)
    op = "goldman.pair_omega"
    rep.check("closed_form_pointwise", op, "wedge-trace integrand identities", worst_pt, 1e-12)
    rep.check("closed_form_integrals", op, "pairing closed forms", worst_int / scale, 1e-10)
    rep.check("closed_form_mixed", op, "quadratic-cubic pairings vanish", worst_mixed / scale,
              1e-10)

    # Lagrangian and involution, closed-form case
    T = [cn.fuchsian_tangent(s, "Q1", f) for f in Bc]
    lag = max(float(np.abs(gm.wedge_trace(T[i], T[j])).max())
              for i in range(len(T)) for j in range(len(T)))
    rep.check("lagrangian_fuchsian_pointwise", "goldman.check_lagrangian",
              "Q1-only variations pair to zero", lag, 0.0, "==")
    dirs = gm.fuchsian_directions(s, [], Bc)
    flipped = gm.fuchsian_directions(s, [], [-f for f in Bc])
    disc = max(abs(gm.omega(dirs[i], dirs[j]) - gm.omega(-flipped[i], -flipped[j]))
               for i in range(len(dirs)) for j in range(len(dirs)))
    rep.check("involution_fuchsian", "goldman.check_involution",
              "Q -> -Q preserves the pairing", disc, 0.0, "==")
    return rep


def suite_solver(ws):
    rep = SuiteReport("solver", ws.level)
    c = ws.config
    m = ws.mesh(ws.level)
    op = "wang.solve_wang"

    # constant-coefficient synthetic problem against a bracketing root finder
    kappa = 0.5
    alpha = np.sqrt(4 * kappa / c.pairing_constant) * m.rep_lam0 ** 1.5
    Qs = DifferentialField(3, alpha)
    root = brentq(lambda x: 1 - math.exp(2 * x) + kappa * math.exp(-4 * x), -1.0, 2.0,
                  xtol=1e-15, rtol=1e-15)
    syn = solve_wang(m, Qs, tol=c.newton_tol, constant=c.pairing_constant)
    rep.check("scalar_root_oracle", op, "constant solution of the scalar equation",
              np.abs(syn.u - root).max(), 1e-10)

    sol = ws.solved(ws.level)
    rep.data["solve_report"] = {k: v for k, v in sol.report.items() if k != "continuation"}
    rep.check("final_residual", op, "G = 0", sol.report["final_residual"], c.newton_tol)
    rep.check("min_u_real_mode", op, "u >= 0 in real mode", -float(sol.u.min()), 1e-8)
    Q = ws.cubic_data(ws.level)
    tilted = DifferentialField(3, np.conj(Q.values) * np.exp(0.3j), "dzbar")
    cs = solve_wang(m, Q, tilted, mode="complex", steps=c.continuation_steps,
                    tol=c.newton_tol, constant=c.pairing_constant)
    rep.check("complex_mode_residual", op, "complex G = 0", cs.report["final_residual"],
              c.newton_tol)

    # finite-difference order of the linearization
    rng = np.random.default_rng(c.seed)
    z = m.rep_z
    coef = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v = np.real(sum(cf * z ** j for j, cf in enumerate(coef)))
    G0 = residual_G(sol)
    Lv = linearize_L(sol).matrix @ v
    eps = [1e-2 / 2 ** j for j in range(4)]
    err = [float(np.abs(residual_G(sol.with_u(sol.u + e * v)) - G0 - e * Lv).max())
           for e in eps]
    orders = [math.log2(err[j] / err[j + 1]) for j in range(len(err) - 1)]
    for e, r in zip(eps, err):
        rep.record("linearization_fd_error", ws.level, r, param=e, tracked=False)
    rep.check("linearization_fd_order", "wang.linearize_L", "L is the derivative of G",
              min(orders), 1.9, ">=")
    return rep


def suite_connection(ws):
    rep = SuiteReport("connection", ws.level)
    a, b = ws.pair
    op = "connections.curvature_residual"
    rms = {}
    for level in (a, b):
        D = cn.assemble_D(ws.solved(level))
        r = cn.curvature_residual(D)
        rms[level] = _rms(D.mesh, r)
        rep.record("curvature_solved_rms", level, rms[level])
        rep.record("curvature_solved_max", level, float(r.max()))
    rep.check("flatness_oracle_rms", op, "flat at solutions of G = 0 (pairing constant)",
              _ratio(rms[a], rms[b]), 2.0, ">=")

    # curvature grows with ||G|| along u + delta w
    sol = ws.solved(ws.level)
    m = sol.mesh
    rng = np.random.default_rng(ws.config.seed + 1)
    coef = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    w = 1.0 + 0.5 * np.real(sum(cf * m.rep_z ** j for j, cf in enumerate(coef)))
    gs, cs = [], []
    for delta in (0.0, 0.01, 0.02, 0.04):
        s = sol.with_u(sol.u + delta * w)
        gs.append(float(np.abs(residual_G(s)).max()))
        cs.append(_rms(m, cn.curvature_residual(cn.assemble_D(s, check=False))))
        rep.record("delta_grid_G", ws.level, gs[-1], param=delta, tracked=False)
        rep.record("delta_grid_curvature", ws.level, cs[-1], param=delta, tracked=False)
    mono = min(cs[j + 1] - cs[j] for j in range(len(cs) - 1))
    rep.check("delta_grid_monotone", op, "curvature increases with ||G||", mono, 0.0, ">=")

    # mirrored connection and gauge model are flat too
    Dp = cn.assemble_Dprime(sol)
    D0 = cn.assemble_D0(sol)
    D = cn.assemble_D(sol)
    rd = _rms(m, cn.curvature_residual(D))
    rep.check("mirror_flatness", op, "D' as flat as D", _rms(m, cn.curvature_residual(Dp)),
              2 * rd + 1e-12)
    rep.check("model_flatness", op, "D0 as flat as D", _rms(m, cn.curvature_residual(D0)),
              2 * rd + 1e-12)
    for rec in cn.holonomy_report(D):
        rep.data.setdefault("holonomy", []).append(rec)

    # closedness of the Fuchsian tangents
    op = "connections.closedness_residual"
    cr = {}
    for level in (a, b):
        s0 = ws.sigma0(level)
        D0f = cn.assemble_D(s0)
        worst = 0.0
        for kind, k, chi in (("c1", 2, "dzbar"), ("c2", 2, "dz"), ("Q1", 3, "dz"),
                             ("Q2", 3, "dzbar")):
            for f in ws.basis(level, k):
                f = f if chi == "dz" else conjugate(f)
                T = cn.fuchsian_tangent(s0, kind, f)
                res = cn.closedness_residual(D0f, T)
                worst = max(worst, _rms(ws.mesh(level), res) / T.scale())
        cr[level] = worst
        rep.record("closedness_rms", level, worst)
    rep.check("closedness_decrease", op, "closed-form tangents are d_D-closed",
              _ratio(cr[a], cr[b]), 2.0, ">=")
    return rep


def suite_goldman(ws):
    rep = SuiteReport("goldman", ws.level)
    c = ws.config
    a, b = ws.pair
    m = ws.mesh(ws.level)
    Bq, Bc = ws.basis(ws.level, 2), ws.basis(ws.level, 3)
    G = gm.gram_signature(m, Bq, Bc, ws.sigma0(ws.level), raise_on_degenerate=False)
    rep.data["gram"] = G.to_dict()
    op = "goldman.gram_signature"
    rep.check("n_plus", op, "signature (6g - 6, 10g - 10)", G.n_plus, 6, "==")
    rep.check("n_minus", op, "signature (6g - 6, 10g - 10)", G.n_minus, 10, "==")
    rep.check("n_zero", op, "non-degenerate", G.n_zero, 0, "==")
    sym_floor = gm.SIGNATURE_GAP * G.symmetry_residual * np.abs(G.matrix).max()
    rep.check("eigen_gap", op, "eigenvalues clear of the symmetry residual",
              np.abs(G.eigenvalues).min() - sym_floor, 0.0, ">=")
    rep.check("block_structure", op, "quadratic-cubic block vanishes", G.block_residual, 1e-9)
    d = np.diag(G.matrix)
    rep.check("quadratic_positive", "goldman.apply_J", "omega(v, Jv) > 0 on quadratic directions",
              d[:6].min(), 0.0, ">=")
    rep.check("cubic_negative", "goldman.apply_J", "omega(v, Jv) < 0 on cubic directions",
              -d[6:].max(), 0.0, ">=")
    rep.check("compatibility_fuchsian", "goldman.check_compatibility",
              "omega(J., J.) = omega", G.compatibility_residual, 1e-9)
    for i, ev in enumerate(G.eigenvalues):
        rep.record(f"gram_eigenvalue_{i}", ws.level, ev, tracked=False)

    dt0, dt1 = c.dt[0], c.dt[-1]
    comp, lag = {}, {}
    for level, dt in ((a, dt0), (b, dt0), (b, dt1)):
        Bl = ws.basis(level, 3)
        Q0 = Bl[0] * c.goldman_t
        comp[level, dt] = gm.check_compatibility(ws.mesh(level), Q0, Bl, dt)["residual"]
        L = gm.check_lagrangian(ws.mesh(level), Bl[0], Bl[:3], dt, t=c.goldman_t)
        lag[level, dt] = max(L["Q1"], L["Q2"])
        rep.record("compatibility_offfuchsian", level, comp[level, dt], param=dt, tracked=False)
        rep.record("lagrangian_offfuchsian", level, lag[level, dt], param=dt, tracked=False)
    for level, dt in ((a, dt0), (b, dt1)):
        rep.record("compatibility_joint", level, comp[level, dt])
        rep.record("lagrangian_joint", level, lag[level, dt])
    for name, vals, opn, claim in (
            ("compatibility", comp, "goldman.check_compatibility", "omega(J., J.) = omega"),
            ("lagrangian", lag, "goldman.check_lagrangian", "Q1-only variations pair to zero")):
        rep.check(f"{name}_dt_decrease", opn, claim, _ratio(vals[b, dt0], vals[b, dt1]), 3.0, ">=")
        rep.check(f"{name}_joint_decrease", opn, claim, _ratio(vals[a, dt0], vals[b, dt1]), 2.0,
                  ">=")
        rep.check(f"{name}_absolute", opn, claim, vals[b, dt1], 1e-4)
    Bl = ws.basis(b, 3)
    inv = gm.check_involution(ws.mesh(b), Bl[0] * c.goldman_t, Bl, dt1)
    rep.check("involution_offfuchsian", "goldman.check_involution",
              "Q -> -Q preserves the pairing", inv["discrepancy"], 1e-6)
    return rep


SUITES = {
    "mesh": suite_mesh,
    "basis": suite_basis,
    "fuchsian": suite_fuchsian,
    "solver": suite_solver,
    "connection": suite_connection,
    "goldman": suite_goldman,
}


def run_suite(name, ws):
    return SUITES[name](ws)
