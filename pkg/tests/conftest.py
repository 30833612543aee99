import functools

import pytest

from hitlab.differentials import DifferentialField, holomorphic_basis
from hitlab.surface import build_bolza_domain, build_mesh
from hitlab.wang import solve_wang


@functools.lru_cache(maxsize=None)
def domain():
    return build_bolza_domain()


@functools.lru_cache(maxsize=None)
def mesh(level):
    return build_mesh(domain(), level)


@functools.lru_cache(maxsize=None)
def basis(level, k):
    return tuple(holomorphic_basis(mesh(level), k))


@functools.lru_cache(maxsize=None)
def fuchsian(level):
    m = mesh(level)
    return solve_wang(m, DifferentialField.zeros(m, 3))


@functools.lru_cache(maxsize=None)
def solved(level, amp=1.0, constant=16.0):
    return solve_wang(mesh(level), basis(level, 3)[0] * amp, constant=constant)


@pytest.fixture(scope="session")
def dom():
    return domain()


@pytest.fixture(scope="session")
def cache():
    """Shared builders: ``cache.mesh(level)``, ``cache.basis(level, k)`` and so on."""
    class C:
        pass
    c = C()
    c.mesh, c.basis, c.fuchsian, c.solved = mesh, basis, fuchsian, solved
    return c
