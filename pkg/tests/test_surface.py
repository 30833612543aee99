import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hitlab.surface import (build_mesh, cayley_to_real, commutator_relation_word,
                            derivative_operators, integrate, lam0, laplacian, load_mesh,
                            mobius, mobius_derivative, save_mesh)

# 2 cosh(l/2) for the regular octagon with angles pi/4 is 2 + 2 sqrt 2
TRACE = 2 + 2 * math.sqrt(2)


def su11(theta, t):
    return np.array([[math.cosh(t), math.sinh(t) * np.exp(1j * theta)],
                     [math.sinh(t) * np.exp(-1j * theta), math.cosh(t)]])


def test_generator_traces(dom):
    for g in dom.generators:
        assert abs(np.trace(g) - TRACE) < 1e-12
        assert abs(np.linalg.det(g) - 1) < 1e-12
    for g in dom.real_generators():
        assert np.abs(g.imag).max() < 1e-12
        assert abs(abs(np.trace(g.real)) - TRACE) < 1e-12


def test_translation_length(dom):
    assert 2 * math.cosh(dom.translation_length / 2) == pytest.approx(TRACE, rel=1e-14)


def test_side_pairing(dom):
    v = dom.vertices
    for k, g in enumerate(dom.generators):
        src = {v[(k + 3) % 8], v[(k + 4) % 8]}
        dst = np.array([v[k - 1], v[k]])
        for z in src:
            w = mobius(g, z)
            assert np.abs(dst - w).min() < 1e-12


def test_angles_sum_to_2pi(dom):
    angles = [dom.interior_angle(j) for j in range(8)]
    assert np.allclose(angles, np.pi / 4, atol=1e-12)


def test_relations(dom):
    for word in (dom.relation, commutator_relation_word(dom)):
        M = dom.word_matrix(word)
        assert min(np.abs(M - np.eye(2)).max(), np.abs(M + np.eye(2)).max()) < 1e-9
        assert sorted(map(abs, word)).count(1) >= 1


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-1.5, 1.5), st.floats(0, 2 * np.pi),
       st.floats(-1.5, 1.5), st.complex_numbers(max_magnitude=0.9))
def test_mobius_composition(t1, s1, t2, s2, z):
    A, B = su11(t1, s1), su11(t2, s2)
    assert abs(mobius(A @ B, z) - mobius(A, mobius(B, z))) < 1e-9
    chain = mobius_derivative(A, mobius(B, z)) * mobius_derivative(B, z)
    assert abs(mobius_derivative(A @ B, z) - chain) < 1e-8 * max(1, abs(chain))
    # isometry: lam0 |g'|^2 is preserved
    w = mobius(B, z)
    assert lam0(w) * abs(mobius_derivative(B, z)) ** 2 == pytest.approx(lam0(z), rel=1e-8)


def test_cayley_real():
    g = su11(0.3, 0.7)
    R = cayley_to_real(g)
    assert np.abs(R.imag).max() < 1e-12
    assert abs(np.linalg.det(R) - 1) < 1e-12


@pytest.mark.parametrize("level,dofs,copies,tris", [
    (0, 62, 81, 128), (1, 254, 289, 512), (2, 1022, 1089, 2048)])
def test_mesh_counts(cache, level, dofs, copies, tris):
    m = cache.mesh(level)
    assert (m.n_dof, len(m.vertices), len(m.triangles)) == (dofs, copies, tris)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_euler_characteristic(cache, level):
    m = cache.mesh(level)
    edges = {tuple(sorted((a, b))) for t in m.dof[m.triangles]
             for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    assert m.n_dof - len(edges) + len(m.triangles) == -2


def test_copies_map_to_representatives(cache):
    m = cache.mesh(2)
    w = mobius(m.to_rep, m.vertices)
    assert np.abs(w - m.vertices[m.rep[m.dof]]).max() < 1e-12


def test_area_gauss_bonnet(cache):
    # area of a closed genus-2 hyperbolic surface is 4 pi; barycentric error is O(h^2)
    errs = [abs(cache.mesh(L).hyperbolic_area() - 4 * np.pi) for L in (1, 2, 3)]
    assert errs[2] / (4 * np.pi) < 0.002
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_positive_orientation(cache):
    assert (cache.mesh(2).tri_area > 0).all()


def test_laplacian_structure(cache):
    m = cache.mesh(2)
    L = laplacian(m).matrix
    assert np.abs(L @ np.ones(m.n_dof)).max() < 1e-10
    ML = (L.T.multiply(m.mass)).T.toarray()     # diag(mass) @ L
    assert np.abs(ML - ML.T).max() < 1e-12 * np.abs(ML).max()
    rng = np.random.default_rng(0)
    u = rng.standard_normal(m.n_dof)
    assert u @ (ML @ u) < 0


def _interior_dofs(m, rings=2):
    inner = np.abs(m.rep_z) < 0.6
    return np.flatnonzero(inner)


def test_laplacian_consistency(cache):
    # Delta |z|^2 = (1 - |z|^2)^2 near the centre of the chart
    rms = []
    for L in (1, 2, 3):
        m = cache.mesh(L)
        z = m.rep_z
        f = np.abs(z) ** 2
        idx = _interior_dofs(m)
        err = (laplacian(m).matrix @ f - (1 - np.abs(z) ** 2) ** 2)[idx]
        rms.append(np.sqrt(np.mean(err ** 2)))
    assert rms[0] / rms[1] > 1.8 and rms[1] / rms[2] > 1.8


def test_derivative_operators(cache):
    errs = []
    for L in (1, 2, 3):
        m = cache.mesh(L)
        Dz, Dzb = derivative_operators(m)
        z = m.rep_z
        idx = _interior_dofs(m)
        r2 = np.abs(z) ** 2
        f = np.exp(z) + np.cos(2 * r2)
        e1 = np.abs((Dz @ f - (np.exp(z) - 2 * np.sin(2 * r2) * np.conj(z)))[idx]).max()
        e2 = np.abs((Dzb @ f + 2 * np.sin(2 * r2) * z)[idx]).max()
        errs.append(max(e1, e2))
    assert errs[0] / errs[1] > 4 and errs[1] / errs[2] > 4


def test_integrate_constant(cache):
    m = cache.mesh(2)
    assert integrate(m, np.ones(m.n_dof)) == pytest.approx(m.hyperbolic_area(), rel=1e-14)
    with pytest.raises(ValueError):
        integrate(m, np.ones(7))
    with pytest.raises(ValueError):
        integrate(m, np.ones(m.n_dof), measure="nope")


def test_save_load_roundtrip(tmp_path, cache, dom):
    m = cache.mesh(1)
    p = tmp_path / "m.npz"
    save_mesh(m, p)
    m2 = load_mesh(p, dom)
    assert m2.checksum() == m.checksum()
    assert np.array_equal(m2.to_rep, m.to_rep)


def test_build_deterministic(dom):
    assert build_mesh(dom, 1).checksum() == build_mesh(dom, 1).checksum()
