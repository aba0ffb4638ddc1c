"""Energy identity for heat and the energy chain for rough complex m = 2 coefficients.

Run: python3 demos/energy_chain.py
"""
from tentlab.experiments import run

heat = run("run_energy_identity")
print("heat: relative identity error", f"{heat.metrics['identity_rel_err']:.2e}")

rough = run("run_energy_identity", coeffs="rough(10,42)", m=2, T=0.2)
m = rough.metrics
print(f"rough m=2: ||u0|| = {m['u0_norm']:.4f}, sqrt(2 Lambda) ||grad^2 u|| = {m['q_grad']:.4f},"
      f" sqrt(Lambda/lambda) ||u0|| = {m['q_bound']:.4f}")
print("verdicts:", rough.verdicts)
