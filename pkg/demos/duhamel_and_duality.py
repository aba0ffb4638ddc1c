"""Picard iteration of the Duhamel formula against direct time stepping, and discrete duality.

Run: python3 demos/duhamel_and_duality.py
"""
import numpy as np

from tentlab.coeffs import make_rough
from tentlab.experiments import run
from tentlab.grid import Field, make_grid
from tentlab.propagator import Propagator, SolverConfig

res = run("run_duhamel_crosscheck")
for k, v in res.metrics.items():
    if k.endswith("rel_diff") or k.endswith("semigroup_diff") or k.endswith("diverged"):
        print(f"{k}: {v}")

g = make_grid(1, 128, 16.0)
A = make_rough(17, 10.0, g, 1, 1, "piecewise_constant", pieces=4, horizon=0.1)
P = Propagator(A, SolverConfig(dt=1e-2, theta=1.0, tol_lin=1e-10))
rng = np.random.default_rng(0)
f = Field(g, rng.standard_normal(128) + 0j)
h = Field(g, rng.standard_normal(128) + 0j)
lhs = np.vdot(h.values, P.evolve(0.02, 0.09, f).values)
rhs = np.vdot(P.adjoint_propagate(0.02, 0.09, h).values, f.values)
print(f"<Gamma f, h> = {lhs:.12f}\n<f, Gamma* h> = {rhs:.12f}")
