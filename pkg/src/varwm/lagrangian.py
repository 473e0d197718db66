"""Structured latent Lagrangian L(q, v; eta) = 1/2 v^T M(q, eta) v - V(q, eta).

The mass matrix is positive diagonal, M = diag(softplus(m_net) + eps), so the
kinetic term is non-negative by construction. The midpoint discrete Lagrangian
L_d(q_a, q_b) = h * L((q_a + q_b)/2, (q_b - q_a)/h) is what the integrator
differentiates.

Variants (selected by ``LagrangianSpec.variant``):

- ``structured``      learned mass net + potential net (the full model)
- ``direct_scalar``   a single network (q, v, eta) -> L, no T - V split
- ``identity_mass``   mass frozen at 1, learned potential
- ``fixed_diag_mass`` d free positive mass scalars independent of (q, eta)
- ``analytic``        diagonal quadratic-plus-linear system with explicit
                      (m, k, g) parameters; used as ground truth in tests
"""

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from .nets import DimensionError, MLPSpec, init_mlp, mlp_apply

VARIANTS = ("structured", "direct_scalar", "identity_mass", "fixed_diag_mass", "analytic")

EPSILON_MASS = 1e-4


@dataclass(frozen=True)
class LagrangianSpec:
    variant: str
    d: int
    d_eta: int = 8
    hidden: tuple = (64, 64)
    epsilon_mass: float = EPSILON_MASS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def mass_net(self):
        return MLPSpec(self.d + self.d_eta, self.d, self.hidden)

    @property
    def potential_net(self):
        return MLPSpec(self.d + self.d_eta, 1, self.hidden)

    @property
    def direct_net(self):
        return MLPSpec(2 * self.d + self.d_eta, 1, self.hidden)


def init_lagrangian(spec: LagrangianSpec, seed: int):
    """Parameter pytree for a variant; sub-networks get distinct seeds."""
    if spec.variant == "structured":
        return {
            "mass": init_mlp(spec.mass_net, seed),
            "potential": init_mlp(spec.potential_net, seed + 1),
        }
    if spec.variant == "direct_scalar":
        return {"direct": init_mlp(spec.direct_net, seed)}
    if spec.variant == "identity_mass":
        return {"potential": init_mlp(spec.potential_net, seed + 1)}
    if spec.variant == "fixed_diag_mass":
        return {
            "log_mass": jnp.zeros(spec.d),
            "potential": init_mlp(spec.potential_net, seed + 1),
        }
    if spec.variant == "analytic":
        return {"m": jnp.ones(spec.d), "k": jnp.zeros(spec.d), "g": jnp.zeros(spec.d)}
    raise ValueError(spec.variant)


def _check_dim(spec, q):
    q = jnp.asarray(q, dtype=jnp.float64)
    if q.shape != (spec.d,):
        raise DimensionError(f"expected state of shape ({spec.d},), got {q.shape}")
    return q


def mass(spec: LagrangianSpec, params, q, eta):
    """Positive diagonal mass, elementwise >= epsilon_mass."""
    if spec.variant == "identity_mass":
        return jnp.ones(spec.d)
    if spec.variant == "fixed_diag_mass":
        return jnp.logaddexp(params["log_mass"], 0.0) + spec.epsilon_mass
    if spec.variant == "analytic":
        return params["m"]
    if spec.variant == "structured":
        raw = mlp_apply(spec.mass_net, params["mass"], jnp.concatenate([q, eta]))
        return jnp.logaddexp(raw, 0.0) + spec.epsilon_mass
    raise ValueError(f"variant {spec.variant!r} does not define a mass")


def potential(spec: LagrangianSpec, params, q, eta):
    if spec.variant == "analytic":
        return 0.5 * jnp.sum(params["k"] * q**2) + jnp.sum(params["g"] * q)
    if spec.variant == "direct_scalar":
        raise ValueError("direct_scalar has no separate potential")
    return mlp_apply(spec.potential_net, params["potential"], jnp.concatenate([q, eta]))[0]


def lagrangian_value(spec: LagrangianSpec, params, q, v, eta):
    q = _check_dim(spec, q)
    v = _check_dim(spec, v)
    if spec.variant == "direct_scalar":
        return mlp_apply(spec.direct_net, params["direct"], jnp.concatenate([q, v, eta]))[0]
    kinetic = 0.5 * jnp.sum(mass(spec, params, q, eta) * v**2)
    return kinetic - potential(spec, params, q, eta)


def discrete_lagrangian(spec: LagrangianSpec, params, h, q_a, q_b, eta):
    """Midpoint discrete Lagrangian h * L((q_a+q_b)/2, (q_b-q_a)/h; eta)."""
    q_a = _check_dim(spec, q_a)
    q_b = _check_dim(spec, q_b)
    midpoint = 0.5 * (q_a + q_b)
    velocity = (q_b - q_a) / h
    return h * lagrangian_value(spec, params, midpoint, velocity, eta)


def discrete_lagrangian_gradients(spec: LagrangianSpec, params, h, q_a, q_b, eta):
    """(D1, D2): exact derivatives of L_d with respect to its two states."""
    q_a = _check_dim(spec, q_a)
    q_b = _check_dim(spec, q_b)
    d1, d2 = jax.grad(discrete_lagrangian, argnums=(3, 4))(spec, params, h, q_a, q_b, eta)
    return d1, d2


def energy(spec: LagrangianSpec, params, q, v, eta):
    """Learned total energy T(q, v) + V(q) along a trajectory."""
    q = _check_dim(spec, q)
    v = _check_dim(spec, v)
    if spec.variant == "direct_scalar":
        # Legendre-style energy v * dL/dv - L, the conserved quantity of the
        # continuous dynamics for a velocity-dependent scalar Lagrangian.
        dl_dv = jax.grad(lagrangian_value, argnums=3)(spec, params, q, v, eta)
        return jnp.dot(v, dl_dv) - lagrangian_value(spec, params, q, v, eta)
    kinetic = 0.5 * jnp.sum(mass(spec, params, q, eta) * v**2)
    return kinetic + potential(spec, params, q, eta)


@dataclass
class LagrangianModel:
    """A Lagrangian spec bound to parameters and a timestep."""

    spec: LagrangianSpec
    params: dict
    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("timestep h must be positive")

    @classmethod
    def create(cls, spec, h, seed=0):
        return cls(spec, init_lagrangian(spec, seed), h)

    @classmethod
    def analytic(cls, d, h, m=1.0, k=0.0, g=0.0):
        """Explicit diagonal system: V(q) = 1/2 k q^2 + g q, constant mass m."""
        spec = LagrangianSpec("analytic", d, d_eta=0)
        params = {
            "m": jnp.broadcast_to(jnp.asarray(m, dtype=jnp.float64), (d,)),
            "k": jnp.broadcast_to(jnp.asarray(k, dtype=jnp.float64), (d,)),
            "g": jnp.broadcast_to(jnp.asarray(g, dtype=jnp.float64), (d,)),
        }
        return cls(spec, params, h)

    def mass(self, q, eta=None):
        return np.asarray(mass(self.spec, self.params, *self._qe(q, eta)))

    def lagrangian_value(self, q, v, eta=None):
        q, eta = self._qe(q, eta)
        return float(lagrangian_value(self.spec, self.params, q, jnp.asarray(v, dtype=jnp.float64), eta))

    def discrete_lagrangian(self, q_a, q_b, eta=None):
        q_a, eta = self._qe(q_a, eta)
        return float(discrete_lagrangian(self.spec, self.params, self.h, q_a, jnp.asarray(q_b, dtype=jnp.float64), eta))

    def discrete_lagrangian_gradients(self, q_a, q_b, eta=None):
        q_a, eta = self._qe(q_a, eta)
        d1, d2 = discrete_lagrangian_gradients(
            self.spec, self.params, self.h, q_a, jnp.asarray(q_b, dtype=jnp.float64), eta
        )
        return np.asarray(d1), np.asarray(d2)

    def energy(self, q, v, eta=None):
        q, eta = self._qe(q, eta)
        return float(energy(self.spec, self.params, q, jnp.asarray(v, dtype=jnp.float64), eta))

    def _qe(self, q, eta):
        q = jnp.asarray(q, dtype=jnp.float64)
        if eta is None:
            eta = jnp.zeros(self.spec.d_eta)
        else:
            eta = jnp.asarray(eta, dtype=jnp.float64)
        return q, eta
