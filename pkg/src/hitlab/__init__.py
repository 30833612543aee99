"""Numerical experiments on the SL(3) Hitchin component of the Bolza surface."""

from .surface import build_bolza_domain, build_mesh, load_mesh, save_mesh
from .differentials import DifferentialField, holomorphic_basis, pairing_h, PAIRING_CONSTANT
from .wang import solve_wang
from .connections import assemble_D, assemble_D0, assemble_Dprime, curvature_residual, holonomy
from .goldman import gram_signature, pair_omega, apply_J

__version__ = "0.1.0"
