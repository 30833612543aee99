import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from hitlab.differentials import DifferentialField, conjugate
from hitlab.wang import (AffineSphereData, NewtonDivergence, linearize_L, newton, residual_G,
                         solve_wang)

# root of 1 - e^{2u} + 0.5 e^{-4u}, from scipy brentq at xtol 1e-15
ROOT_HALF = 0.1300872837139198


def constant_kappa_field(mesh, kappa, constant=16.0):
    """A (non-holomorphic) cubic field with (1/4) h(Q, conj Q) = kappa everywhere."""
    return DifferentialField(3, np.sqrt(4 * kappa / constant) * mesh.rep_lam0 ** 1.5)


def scalar_root(kappa):
    return brentq(lambda x: 1 - math.exp(2 * x) + kappa * math.exp(-4 * x), -1.0, 3.0,
                  xtol=1e-15, rtol=1e-15)


def smooth_cubic(mesh, seed, amp=1.0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    z = mesh.rep_z
    return DifferentialField(3, amp * (c[0] + c[1] * z + c[2] * z * z))


def test_zero_cubic_one_step(cache):
    s = cache.fuchsian(2)
    assert s.report["newton_steps"] == 1
    assert np.abs(s.u).max() == 0.0


def test_scalar_root_frozen(cache):
    m = cache.mesh(1)
    s = solve_wang(m, constant_kappa_field(m, 0.5))
    assert np.abs(s.u - ROOT_HALF).max() < 1e-10
    assert scalar_root(0.5) == pytest.approx(ROOT_HALF, abs=1e-14)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.01, 4.0))
def test_scalar_root_oracle(cache, kappa):
    m = cache.mesh(1)
    s = solve_wang(m, constant_kappa_field(m, kappa))
    assert np.abs(s.u - scalar_root(kappa)).max() < 1e-10


@pytest.mark.parametrize("amp", [0.5, 2.0])
def test_real_mode_positive(cache, amp):
    s = cache.solved(2, amp)
    assert s.report["final_residual"] < 1e-9
    assert s.u.min() >= -1e-8
    assert s.u.max() > 0


@settings(max_examples=5, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_phase_invariance(cache, theta):
    m = cache.mesh(1)
    Q = smooth_cubic(m, 0)
    s1 = solve_wang(m, Q)
    s2 = solve_wang(m, Q * np.exp(1j * theta))
    assert np.abs(s1.u - s2.u).max() < 1e-10


def test_complex_mode_reduces_to_real(cache):
    m = cache.mesh(1)
    Q = smooth_cubic(m, 1)
    s1 = solve_wang(m, Q)
    s2 = solve_wang(m, Q, conjugate(Q), mode="complex")
    assert np.abs(s2.u - s1.u).max() < 1e-10
    assert s2.report["im_u_max"] < 1e-10


def test_complex_mode_tilted(cache):
    m = cache.mesh(1)
    Q = smooth_cubic(m, 2)
    Qb = conjugate(Q) * np.exp(0.4j)
    s = solve_wang(m, Q, Qb, mode="complex")
    assert np.abs(residual_G(s)).max() < 1e-9
    assert s.report["im_u_max"] > 1e-6


def test_linearization_order(cache):
    s = cache.solved(2, 1.0)
    rng = np.random.default_rng(5)
    v = rng.standard_normal(s.mesh.n_dof) * 0.1 + np.real(s.mesh.rep_z)
    G0 = residual_G(s)
    Lv = linearize_L(s).matrix @ v
    eps = [1e-2, 5e-3, 2.5e-3]
    err = [np.abs(residual_G(s.with_u(s.u + e * v)) - G0 - e * Lv).max() for e in eps]
    orders = np.log2(np.array(err[:-1]) / np.array(err[1:]))
    assert orders.min() >= 1.9


def test_continuation_report(cache):
    m = cache.mesh(1)
    s = solve_wang(m, smooth_cubic(m, 3, amp=2.0), steps=4)
    r = s.report
    assert [c["t"] for c in r["continuation"]][-1] == 1.0
    assert r["newton_steps"] == sum(c["iterations"] for c in r["continuation"])
    assert r["residual_history"][-1] <= 1e-9


def test_warm_start(cache):
    m = cache.mesh(1)
    Q = smooth_cubic(m, 4)
    s = solve_wang(m, Q)
    s2 = solve_wang(m, Q * 1.001, u0=s.u)
    assert s2.report["newton_steps"] <= 4


def test_newton_iteration_cap(cache):
    m = cache.mesh(1)
    sig = AffineSphereData(m, smooth_cubic(m, 0, amp=50.0),
                           conjugate(smooth_cubic(m, 0, amp=50.0)), np.zeros(m.n_dof))
    with pytest.raises(NewtonDivergence):
        newton(sig, max_iter=1)


def test_input_validation(cache):
    m = cache.mesh(1)
    Q = smooth_cubic(m, 0)
    with pytest.raises(ValueError):
        solve_wang(m, conjugate(Q))
    with pytest.raises(ValueError):
        solve_wang(m, Q, conjugate(Q) * 2.0)
    with pytest.raises(ValueError):
        solve_wang(m, Q, mode="complex")
    with pytest.raises(ValueError):
        solve_wang(m, Q, steps=0)
    with pytest.raises(ValueError):
        solve_wang(m, DifferentialField(3, np.full(m.n_dof, np.nan)))
    with pytest.raises(ValueError):
        solve_wang(cache.mesh(0), Q)


def test_explicit_base_density_matches_default(cache):
    m = cache.mesh(1)
    Q = smooth_cubic(m, 6)
    s1 = solve_wang(m, Q)
    s2 = solve_wang(m, Q, lam_base=m.rep_lam0.copy())
    assert np.abs(s1.u - s2.u).max() < 1e-13
