"""Gram matrix of omega(v, Jv) on the Fuchsian tangent space at level 2.

    python demos/signature.py
"""

import numpy as np

from hitlab import build_bolza_domain, build_mesh, gram_signature, holomorphic_basis

m = build_mesh(build_bolza_domain(), 2)
rep = gram_signature(m, holomorphic_basis(m, 2), holomorphic_basis(m, 3))
print("signature", rep.signature)
print("diagonal", np.array2string(np.diag(rep.matrix), precision=4))
print(f"symmetry residual {rep.symmetry_residual:.1e}")
