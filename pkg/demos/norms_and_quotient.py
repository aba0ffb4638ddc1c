"""Tent, Carleson and BMO functionals, plus the polynomial quotient seen by m = 2.

For f = log|x| + x the plain BMO norm grows with the largest ball radius, while the m = 2
Carleson norm of the biharmonic extension and the BMO_2 norm stay put.
Run: python3 demos/norms_and_quotient.py
"""
import math

import numpy as np

from tentlab import functionals as fn
from tentlab.experiments import run
from tentlab.coeffs import polyharmonic
from tentlab.grid import field_from_function, lp_norm, make_grid
from tentlab.semigroup import Semigroup, trajectory

g = make_grid(1, 256, 32.0)
f = field_from_function(g, lambda x: np.exp(-x ** 2))
u = trajectory(Semigroup(polyharmonic(g, 1)), f, np.concatenate([[0.0], np.geomspace(1e-4, 64, 200)]))
F = fn.gradient_trajectory(u, 1)
# For heat on the line the p = 2 tent norm of grad u is ||f||_2 / sqrt(2). On the periodic box
# the mean of f is never dissipated, which explains why the printed value falls short.
print(f"tent p=2 {fn.tent_norm(F, 2.0, 1).value:.6f} vs ||f||/sqrt(2) {lp_norm(f, 2.0) / math.sqrt(2):.6f}")
print(f"Carleson {fn.carleson_norm(u, 1).value:.4f}, bmo {fn.bmo_norm(f).value:.4f}")

res = run("run_carleson_bmo")
m = res.metrics
for r, c, b, b2 in zip(m["quotient.rmax"], m["quotient.carleson_m2"], m["quotient.bmo"],
                       m["quotient.bmo_m2"]):
    print(f"rmax {r:4g}: carleson_m2 {c:.4f}  bmo {b:.4f}  bmo_2 {b2:.4f}")
