"""The discrete Euler-Lagrange (DEL) transition as a structure-preserving rollout rule.

Walks through the core mechanism on closed-form Lagrangians:

1. A free particle (zero potential): the DEL solve reproduces exact
   constant-velocity extrapolation and the residual vanishes identically.
2. A harmonic oscillator: a 500-step variational rollout keeps the relative
   energy error small and *bounded* (oscillating, not growing), the signature
   property of variational integrators.

Run:  python3 demos/01_variational_transition.py
"""

import numpy as np

from varwm import LagrangianModel, SolverConfig, rollout

# --- 1. Free particle -------------------------------------------------------
model = LagrangianModel.analytic(d=2, h=0.1, m=1.0, k=0.0)
q0 = np.array([0.0, 1.0])
q1 = np.array([0.05, 1.1])  # velocity (0.5, 1.0)
result = rollout(model, q0, q1, horizon=500)

expected = q1 + np.arange(1, 501)[:, None] * (q1 - q0)
err = np.abs(result.predicted - expected).max()
print("free particle:")
print(f"  max |rollout - constant-velocity extrapolation| = {err:.3e}")
print(f"  max DEL residual norm                           = {result.residual_norms.max():.3e}")

# --- 2. Harmonic oscillator -------------------------------------------------
m, k, h = 1.0, 1.0, 0.1
model = LagrangianModel.analytic(d=1, h=h, m=m, k=k)
omega = np.sqrt(k / m)
# start on an exact trajectory q(t) = cos(omega t)
q0 = np.array([np.cos(0.0)])
q1 = np.array([np.cos(omega * h)])
result = rollout(model, q0, q1, horizon=500, cfg=SolverConfig(n_iters=8))

states = result.states
v = (states[1:] - states[:-1]) / h
energies = np.array([model.energy(states[i + 1], v[i]) for i in range(len(v))])
rel = np.abs(energies - energies[0]) / abs(energies[0])
print("\nharmonic oscillator, 500 steps:")
print(f"  mean relative energy deviation = {rel.mean():.4f}")
print(f"  max  relative energy deviation = {rel.max():.4f}")
first, second = rel[: len(rel) // 2].mean(), rel[len(rel) // 2 :].mean()
print(f"  first-half vs second-half mean = {first:.4f} vs {second:.4f}  (no secular growth)")
