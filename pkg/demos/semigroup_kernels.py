"""Heat and biharmonic kernels from the exact Fourier semigroup.

The m = 2 kernel changes sign and decays like exp(-c (|x|^4/t)^(1/3)); the heat kernel stays
positive with Gaussian tails. Run: python3 demos/semigroup_kernels.py
"""
import numpy as np

from tentlab.coeffs import polyharmonic
from tentlab.grid import make_grid
from tentlab.semigroup import Semigroup

g = make_grid(1, 1024, 64.0)
x = g.axis()
for m in (1, 2):
    S = Semigroup(polyharmonic(g, m))
    k = S.kernel(1.0).values[0].real
    print(f"m={m}: mass {g.cell_volume * k.sum():.12f}, min {k.min():+.3e}")
    for d in (2, 4, 8, 12):
        i = np.argmin(np.abs(x - d))
        print(f"    K(1, {d:2d}) = {k[i]:+.3e}")
