"""Newton continuation for the Wang equation

    G(u) = Delta u - e^{2u} + (1/4) h(Q1, Qbar2) e^{-4u} + 1 = 0

on the glued Bolza octagon, with ``h`` from :func:`hitlab.differentials.pairing_h`.

Real mode takes ``Qbar2 = conj(Q1)`` and keeps ``u`` real.  Complex mode lets
``Q1`` and ``Qbar2`` vary independently; ``u`` is then complex and the
linearization is complex symmetric.

A base density ``lam_base`` other than ``lam0`` is treated as a conformal
perturbation: the Laplacian becomes ``(lam0 / lam_base) Delta_0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .differentials import DifferentialField, conjugate, pairing_h, PAIRING_CONSTANT
from .numerics import NonConvergence, SingularOperator, SparseOperator, solve_sparse
from .surface import laplacian

__all__ = [
    "NewtonDivergence",
    "SingularLinearization",
    "AffineSphereData",
    "residual_G",
    "linearize_L",
    "solve_wang",
    "newton",
]

G_TOL = 1e-9
REAL_TOL = 1e-10


class NewtonDivergence(RuntimeError):
    pass


class SingularLinearization(RuntimeError):
    pass


@dataclass
class AffineSphereData:
    mesh: object
    Q1: DifferentialField
    Qbar2: DifferentialField
    u: np.ndarray
    mode: str = "real"
    lam_base: np.ndarray = None
    constant: float = PAIRING_CONSTANT
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("real", "complex"):
            raise ValueError("mode must be 'real' or 'complex'")
        if self.lam_base is None:
            self.lam_base = self.mesh.rep_lam0
        dtype = float if self.mode == "real" else complex
        if self.mode == "real":
            if np.abs(np.imag(self.u)).max(initial=0.0) > REAL_TOL:
                raise ValueError("real mode needs a real u")
            self.u = np.real(self.u)
        self.u = np.asarray(self.u, dtype=dtype)

    @property
    def lam(self):
        """Metric density e^{2u} lam_base at each dof."""
        return np.exp(2 * self.u) * self.lam_base

    def kappa(self):
        """(1/4) h(Q1, Qbar2) per dof."""
        k = 0.25 * pairing_h(self.Q1, self.Qbar2, self.mesh, lam=self.lam_base,
                             constant=self.constant)
        return k.real if self.mode == "real" else k

    def laplacian(self):
        D = laplacian(self.mesh).matrix
        ratio = self.mesh.rep_lam0 / self.lam_base
        if np.all(ratio == 1.0):
            return D
        return sp.diags(ratio) @ D

    def with_u(self, u):
        return AffineSphereData(self.mesh, self.Q1, self.Qbar2, u, self.mode,
                                self.lam_base, self.constant)


def residual_G(sigma):
    u = sigma.u
    return sigma.laplacian() @ u - np.exp(2 * u) + sigma.kappa() * np.exp(-4 * u) + 1.0


def linearize_L(sigma):
    """L = Delta - diag(2 e^{2u} + e^{-4u} h(Q1, Qbar2))."""
    u = sigma.u
    diag = 2 * np.exp(2 * u) + 4 * sigma.kappa() * np.exp(-4 * u)
    return SparseOperator.from_matrix(sigma.laplacian() - sp.diags(diag))


def newton(sigma, tol=G_TOL, max_iter=40, floor=1e-13):
    """Damping-free Newton from ``sigma.u``.  Returns (solution, residual history).

    Iterates until ``||G||_inf <= floor`` or the residual stops contracting
    after dropping below ``tol``.
    """
    u = sigma.u.copy()
    cur = sigma.with_u(u)
    r = np.abs(residual_G(cur)).max()
    hist = [float(r)]
    stalls = 0
    for _ in range(max_iter):
        G = residual_G(cur)
        try:
            du = solve_sparse(linearize_L(cur), -G)
        except (SingularOperator, NonConvergence) as exc:
            raise SingularLinearization(str(exc)) from exc
        if sigma.mode == "real":
            du = np.real(du)
        new = sigma.with_u(u + du)
        r_new = np.abs(residual_G(new)).max()
        if not np.isfinite(r_new):
            raise NewtonDivergence("non-finite residual")
        hist.append(float(r_new))
        if r_new <= tol and (r_new <= floor or r_new > 0.5 * r):
            if r_new <= r:
                u, cur, r = u + du, new, r_new
            break
        if r_new >= r:
            stalls += 1
            if stalls >= 3:
                raise NewtonDivergence(f"residual failed to contract over 3 steps ({r_new:.3e})")
        else:
            stalls = 0
        u, cur, r = u + du, new, r_new
    else:
        if r > tol:
            raise NewtonDivergence(f"no convergence in {max_iter} steps (residual {r:.3e})")
    return cur, hist


def _scaled(field, s):
    return DifferentialField(field.weight, field.values * s, field.chirality)


def solve_wang(mesh, Q1, Qbar2=None, mode="real", steps=8, lam_base=None,
               u0=None, tol=G_TOL, constant=PAIRING_CONSTANT, max_halvings=4):
    """Solve G = 0 by linear continuation ``Q <- (k/steps) Q`` from u = 0.

    With ``u0`` given the continuation is skipped and Newton starts from
    ``u0`` at the full data (warm start for nearby problems).
    """
    if Qbar2 is None:
        if mode != "real":
            raise ValueError("complex mode needs Qbar2")
        Qbar2 = conjugate(Q1)
    for f, chi in ((Q1, "dz"), (Qbar2, "dzbar")):
        if f.weight != 3 or f.chirality != chi:
            raise ValueError("Q1 must be a dz^3 field and Qbar2 a dzbar^3 field")
        if f.values.shape != (mesh.n_dof,):
            raise ValueError("field does not live on this mesh")
        if not np.all(np.isfinite(f.values)):
            raise ValueError("non-finite differential")
    if mode == "real" and np.abs(Qbar2.values - np.conj(Q1.values)).max(initial=0.0) > 1e-12 \
            * max(1.0, np.abs(Q1.values).max(initial=0.0)):
        raise ValueError("real mode needs Qbar2 = conjugate(Q1)")
    if steps < 1:
        raise ValueError("steps must be positive")

    zero = np.zeros(mesh.n_dof)
    trivial = not np.any(Q1.values) or not np.any(Qbar2.values)
    trace = []
    history = []

    def at(s, u):
        return AffineSphereData(mesh, _scaled(Q1, s), _scaled(Qbar2, s), u, mode,
                                lam_base, constant)

    if u0 is not None or trivial:
        start = zero if u0 is None else u0
        sol, hist = newton(at(1.0, start), tol=tol)
        history.extend(hist)
        trace.append({"t": 1.0, "iterations": len(hist) - 1, "residual": hist[-1]})
    else:
        u = zero
        t = 0.0
        target = [k / steps for k in range(1, steps + 1)]
        i = 0
        halvings = 0
        h = 1.0 / steps
        while i < len(target):
            t_next = min(t + h, target[i])
            try:
                sol, hist = newton(at(t_next, u), tol=tol)
            except (NewtonDivergence, SingularLinearization):
                halvings += 1
                if halvings > max_halvings:
                    raise
                h *= 0.5
                continue
            history.extend(hist)
            trace.append({"t": t_next, "iterations": len(hist) - 1, "residual": hist[-1]})
            u, t = sol.u, t_next
            if t >= target[i] - 1e-15:
                i += 1
                h = 1.0 / steps
        sol = at(1.0, u)
    rfinal = float(np.abs(residual_G(sol)).max())
    if rfinal > tol:
        raise NewtonDivergence(f"final residual {rfinal:.3e} above {tol:.1e}")
    sol.report = {
        "mode": mode,
        "level": mesh.level,
        "steps": steps,
        "residual_history": history,
        "final_residual": rfinal,
        "newton_steps": sum(c["iterations"] for c in trace),
        "continuation": trace,
        "re_u_min": float(np.real(sol.u).min()),
        "re_u_max": float(np.real(sol.u).max()),
        "im_u_max": float(np.abs(np.imag(sol.u)).max()),
    }
    return sol

