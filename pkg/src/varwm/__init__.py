"""Variational world models in state space.

A learned discrete Lagrangian defines the rollout rule: each next state is
obtained by an unrolled, differentiable solve of the discrete Euler-Lagrange
condition. The package also ships ground-truth motion-family simulators,
training, unconstrained / refinement baselines, and physical-consistency
metrics.

All numerics are 64-bit; importing this package enables float64 in jax.
"""

import jax

jax.config.update("jax_enable_x64", True)

from .lagrangian import LagrangianSpec, LagrangianModel, init_lagrangian  # noqa: E402
from .integrator import SolverConfig, RolloutResult, rollout, solve_step  # noqa: E402

__all__ = [
    "LagrangianSpec",
    "LagrangianModel",
    "init_lagrangian",
    "SolverConfig",
    "RolloutResult",
    "rollout",
    "solve_step",
]
