import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hitlab.differentials import (NAIVE_PAIRING_CONSTANT, PAIRING_CONSTANT, DifferentialField,
                                  cocycle_residual, conjugate, dbar_kernel, dbar_operator,
                                  dbar_residual, expected_dimension, holomorphic_basis,
                                  l2_inner, load_basis, pairing_h, save_basis)

coeffs = st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                  min_size=5, max_size=5)


def test_expected_dimension():
    assert [expected_dimension(k) for k in (2, 3)] == [3, 5]
    assert expected_dimension(3, genus=3) == 10


def test_field_validation(cache):
    m = cache.mesh(0)
    with pytest.raises(ValueError):
        DifferentialField(2, np.zeros(m.n_dof), "dw")
    with pytest.raises(ValueError):
        DifferentialField.zeros(m, 2) + DifferentialField.zeros(m, 3)
    with pytest.raises(ValueError):
        DifferentialField.zeros(m, 3) - conjugate(DifferentialField.zeros(m, 3))


@settings(max_examples=25, deadline=None)
@given(coeffs)
def test_conjugate_involution(c):
    f = DifferentialField(3, np.array(c))
    g = conjugate(conjugate(f))
    assert g.chirality == "dz" and np.array_equal(g.values, f.values)
    assert conjugate(f).chirality == "dzbar"


def test_chart_values_cocycle(cache):
    m = cache.mesh(1)
    rng = np.random.default_rng(3)
    f = DifferentialField(3, rng.standard_normal(m.n_dof) + 1j * rng.standard_normal(m.n_dof))
    v = f.chart_values(m)
    assert np.allclose(v, f.values[m.dof] * m.jac ** 3)
    assert np.allclose(conjugate(f).chart_values(m), np.conj(v))


def test_pairing_h(cache):
    m = cache.mesh(0)
    a = DifferentialField(3, np.full(m.n_dof, 1 + 1j))
    b = conjugate(a)
    h = pairing_h(a, b, m)
    assert np.allclose(h, PAIRING_CONSTANT * 2 / m.rep_lam0 ** 3)
    h8 = pairing_h(a, b, m, constant=NAIVE_PAIRING_CONSTANT)
    assert np.allclose(h8, h / 2)
    with pytest.raises(ValueError):
        pairing_h(b, a, m)


def test_level_guard(cache):
    with pytest.raises(ValueError):
        holomorphic_basis(cache.mesh(1), 2)
    with pytest.raises(ValueError):
        dbar_operator(cache.mesh(1), 4)


@pytest.mark.parametrize("k", [2, 3])
def test_basis_level2(cache, k):
    m = cache.mesh(2)
    B = cache.basis(2, k)
    assert len(B) == expected_dimension(k)
    G = np.array([[l2_inner(m, f, g) for g in B] for f in B])
    assert np.abs(G - np.eye(len(B))).max() < 1e-12
    assert max(cocycle_residual(m, f) / np.abs(f.chart_values(m)).max() for f in B) < 1e-12
    assert max(dbar_residual(m, f) for f in B) < 0.02


@pytest.mark.parametrize("k", [2, 3])
def test_kernel_gap_and_convergence(cache, k):
    r2 = max(dbar_residual(cache.mesh(2), f) for f in cache.basis(2, k))
    r3 = max(dbar_residual(cache.mesh(3), f) for f in cache.basis(3, k))
    assert r2 / r3 > 8
    rep = dbar_kernel(cache.mesh(3), k)
    assert rep.gap_ratio > 1e3


@settings(max_examples=10, deadline=None)
@given(coeffs)
def test_kernel_closed_under_combination(cache, c):
    m = cache.mesh(2)
    B = cache.basis(2, 3)
    if not np.any(c):
        return
    f = DifferentialField.zeros(m, 3)
    for ci, b in zip(c, B):
        f = f + b * ci
    assert dbar_residual(m, f) < 0.02


def test_random_field_is_not_holomorphic(cache):
    m = cache.mesh(2)
    rng = np.random.default_rng(0)
    f = DifferentialField(3, rng.standard_normal(m.n_dof) * m.rep_lam0 ** 1.5)
    assert dbar_residual(m, f) > 1.0


def test_basis_save_load(tmp_path, cache):
    m = cache.mesh(2)
    B = list(cache.basis(2, 2))
    p = tmp_path / "b.json"
    save_basis(B, m, p)
    B2 = load_basis(p, m)
    assert all(np.array_equal(f.values, g.values) for f, g in zip(B, B2))
    with pytest.raises(ValueError):
        load_basis(p, cache.mesh(1))
