"""Off-diagonal decay exponents: Gaussian for heat, exponent 4/3 for the biharmonic flow.

Run: python3 demos/off_diagonal.py  (a few seconds)
"""
from tentlab.experiments import run

heat = run("run_offdiag_fit")
print(f"heat: fitted c = {heat.metrics['slope_z']:.4f} (exp(-c d^2/t), expected 1/4)")
bih = run("run_offdiag_fit", coeffs="polyharmonic", m=2)
print(f"m=2: fitted exponent {bih.metrics['beta']:.3f} (expected {bih.metrics['beta_predicted']:.3f})")
