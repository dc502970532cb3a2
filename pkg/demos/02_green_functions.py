"""
Green functions of a strongly disordered chain
==============================================

Sample a potential, build the finite-volume Hamiltonian, classify cells as
singular or not, and check one instance of the geometric resolvent inequality.
"""

import numpy as np

from afslab import disorder as dis
from afslab import geometry as geo
from afslab import operators as op

spec = dis.DisorderSpec.uniform(0, 1, amplitude=10.0, master_seed=2)
amb = geo.CubeSpec((0,), 27)
V = dis.sample(spec, 0, geo.cube_sites(amb))

H = op.assemble(amb, V)
print("spectrum range:", H.eigenvalues.min().round(3), H.eigenvalues.max().round(3))

# dnorm of the nine cells of size 3 at a far-below-spectrum energy
E = -282.0
cells = [geo.CubeSpec((c,), 3) for c in range(-12, 13, 3)]
vals = np.array([op.dnorm(c, E, V, 9) for c in cells])
print("cell dnorms:", np.array2string(vals, precision=3))
print("singular at 3^-1.25:", (vals > 3 ** -1.25).astype(int))

# one GRI instance: inner cube of side 9 inside the ambient chain
inner = geo.CubeSpec((2,), 9)
lhs, rhs = op.gri_residual(inner, amb, 1.3, [(12,)], V)
print(f"GRI: lhs={lhs:.3e} <= rhs={rhs:.3e}")
