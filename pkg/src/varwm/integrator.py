"""The DEL residual, the unrolled preconditioned root solve, and rollout.

The transition rule: given (q_prev, q_cur), the next state is the root of

    R(q_prev, q_cur, q_next) = D2 L_d(q_prev, q_cur) + D1 L_d(q_cur, q_next) = 0

approximated by N preconditioned residual-correction iterations starting from
constant-velocity extrapolation. The update moves by +alpha * P * R with
P = h / (m + eps): a quasi-Newton step against the residual's kinetic-dominant
linearization dR/dq_next ~= -M/h, which makes the free-particle fixed point
attracting (and exact: the initialization is already the root there).

Everything is differentiable end to end; gradients flow through all N
iterations of every step of a rollout.
"""

from dataclasses import dataclass
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from . import lagrangian as lag
from .nets import DimensionError


class RolloutDivergence(RuntimeError):
    """A solver iterate became non-finite or left the trust region.

    Signals an unstable model / step size; states are reported, not clamped.
    """


@dataclass(frozen=True)
class SolverConfig:
    n_iters: int = 8
    alpha: float = 1.0
    precond_epsilon: float = 1e-6
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError("alpha must lie in (0, 2]")


@dataclass
class RolloutResult:
    """states[0:2] are the context pair; states[2:] are predicted."""

    states: np.ndarray  # (H + 2, d)
    residual_norms: np.ndarray  # (H,)
    eta: np.ndarray

    @property
    def horizon(self):
        return self.states.shape[0] - 2

    @property
    def predicted(self):
        return self.states[2:]


def del_residual_fn(spec, params, h, q_prev, q_cur, q_next, eta):
    _, d2_prev = lag.discrete_lagrangian_gradients(spec, params, h, q_prev, q_cur, eta)
    d1_next, _ = lag.discrete_lagrangian_gradients(spec, params, h, q_cur, q_next, eta)
    return d2_prev + d1_next


def discrete_momenta_fn(spec, params, h, q_a, q_b, eta):
    d1, d2 = lag.discrete_lagrangian_gradients(spec, params, h, q_a, q_b, eta)
    return -d1, d2


def _preconditioner(spec, params, h, q_cur, eta, cfg):
    if spec.variant == "direct_scalar":
        m = jnp.ones(spec.d)
    else:
        m = lag.mass(spec, params, q_cur, eta)
    return h / (m + cfg.precond_epsilon)


def solve_step_fn(spec, params, h, q_prev, q_cur, eta, cfg):
    """One variational transition: exactly cfg.n_iters correction iterations."""
    p = _preconditioner(spec, params, h, q_cur, eta, cfg)

    def body(_, q):
        r = del_residual_fn(spec, params, h, q_prev, q_cur, q, eta)
        return q + cfg.alpha * p * r

    q0 = 2.0 * q_cur - q_prev
    q_next = jax.lax.fori_loop(0, cfg.n_iters, body, q0)
    final = del_residual_fn(spec, params, h, q_prev, q_cur, q_next, eta)
    return q_next, jnp.linalg.norm(final)


@partial(jax.jit, static_argnums=(0, 6, 7))
def rollout_states(spec, params, h, q0, q1, eta, horizon, cfg):
    """(states, residual_norms) for a recursive rollout; fully traced."""

    def step(carry, _):
        q_prev, q_cur = carry
        q_next, res = solve_step_fn(spec, params, h, q_prev, q_cur, eta, cfg)
        return (q_cur, q_next), (q_next, res)

    _, (preds, norms) = jax.lax.scan(step, (q0, q1), None, length=horizon)
    states = jnp.concatenate([jnp.stack([q0, q1]), preds], axis=0)
    return states, norms


# jitted entry points for the convenience wrappers below; spec and solver
# config are hashable frozen dataclasses, so they can be static arguments
_residual_jit = partial(jax.jit, static_argnums=(0,))(del_residual_fn)
_momenta_jit = partial(jax.jit, static_argnums=(0,))(discrete_momenta_fn)
_solve_step_jit = partial(jax.jit, static_argnums=(0, 6))(solve_step_fn)


def _as_state(spec, q):
    q = jnp.asarray(q, dtype=jnp.float64)
    if q.shape != (spec.d,):
        raise DimensionError(f"expected state of shape ({spec.d},), got {q.shape}")
    return q


def _as_eta(spec, eta):
    if eta is None:
        return jnp.zeros(spec.d_eta)
    eta = jnp.asarray(eta, dtype=jnp.float64)
    if eta.shape != (spec.d_eta,):
        raise DimensionError(f"expected context of shape ({spec.d_eta},), got {eta.shape}")
    return eta


def del_residual(model, q_prev, q_cur, q_next, eta=None):
    spec = model.spec
    r = _residual_jit(
        spec, model.params, model.h,
        _as_state(spec, q_prev), _as_state(spec, q_cur), _as_state(spec, q_next),
        _as_eta(spec, eta),
    )
    return np.asarray(r)


def discrete_momenta(model, q_a, q_b, eta=None):
    spec = model.spec
    p_minus, p_plus = _momenta_jit(
        spec, model.params, model.h,
        _as_state(spec, q_a), _as_state(spec, q_b), _as_eta(spec, eta),
    )
    return np.asarray(p_minus), np.asarray(p_plus)


def solve_step(model, q_prev, q_cur, eta=None, cfg=SolverConfig()):
    spec = model.spec
    q_prev = _as_state(spec, q_prev)
    q_cur = _as_state(spec, q_cur)
    q_next, res = _solve_step_jit(spec, model.params, model.h, q_prev, q_cur, _as_eta(spec, eta), cfg)
    q_next = np.asarray(q_next)
    scale = max(float(jnp.max(jnp.abs(jnp.stack([q_prev, q_cur])))), 1.0)
    if not np.all(np.isfinite(q_next)) or np.max(np.abs(q_next)) > cfg.divergence_factor * scale:
        raise RolloutDivergence(
            f"solve_step diverged: |q_next| up to {np.max(np.abs(q_next)):.3e} "
            f"from context scale {scale:.3e}"
        )
    return q_next, float(res)


def rollout(model, q_ctx0, q_ctx1, eta=None, horizon=1, cfg=SolverConfig()):
    """Recursive variational rollout with eta frozen for the whole horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    spec = model.spec
    q0 = _as_state(spec, q_ctx0)
    q1 = _as_state(spec, q_ctx1)
    eta_v = _as_eta(spec, eta)
    states, norms = rollout_states(spec, model.params, model.h, q0, q1, eta_v, int(horizon), cfg)
    states = np.asarray(states)
    scale = max(float(np.max(np.abs(states[:2]))), 1.0)
    if not np.all(np.isfinite(states)):
        bad = int(np.argwhere(~np.isfinite(states).all(axis=1))[0, 0])
        raise RolloutDivergence(f"rollout produced non-finite state at step {bad}")
    if np.max(np.abs(states)) > cfg.divergence_factor * scale:
        raise RolloutDivergence(
            f"rollout left the trust region: |q| up to {np.max(np.abs(states)):.3e} "
            f"from context scale {scale:.3e}"
        )
    return RolloutResult(states, np.asarray(norms), np.asarray(eta_v))
