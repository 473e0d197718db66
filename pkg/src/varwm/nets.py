"""Small feed-forward networks with smooth activations.

Only C-infinity activations are allowed (tanh for hidden layers, softplus
where positivity is needed downstream): the DEL residual consumes first
derivatives of these networks and training differentiates those derivatives
again, so kinks would make the objective non-smooth.
"""

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

ALLOWED_ACTIVATIONS = ("tanh", "softplus", "identity")


class DimensionError(ValueError):
    """Input or parameter shape does not match the declared network spec."""


@dataclass(frozen=True)
class MLPSpec:
    """Shape of a fully-connected network: in_dim -> hidden... -> out_dim."""

    in_dim: int
    out_dim: int
    hidden: tuple = (64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ALLOWED_ACTIVATIONS:
            raise ValueError(
                f"activation {self.activation!r} is not smooth enough; "
                f"allowed: {ALLOWED_ACTIVATIONS}"
            )

    @property
    def layer_dims(self):
        return (self.in_dim, *self.hidden, self.out_dim)


def _activate(name, x):
    if name == "tanh":
        return jnp.tanh(x)
    if name == "softplus":
        return jnp.logaddexp(x, 0.0)
    return x


def init_mlp(spec: MLPSpec, seed: int):
    """Glorot-uniform weights (uniform in +-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params.append({"W": jnp.asarray(w), "b": jnp.zeros(fan_out)})
    return params


def mlp_apply(spec: MLPSpec, params, x):
    """Evaluate the network on a single input vector."""
    x = jnp.asarray(x, dtype=jnp.float64)
    if x.shape != (spec.in_dim,):
        raise DimensionError(
            f"expected input of shape ({spec.in_dim},), got {x.shape}"
        )
    if len(params) != len(spec.hidden) + 1:
        raise DimensionError(
            f"expected {len(spec.hidden) + 1} layers, got {len(params)}"
        )
    for layer in params[:-1]:
        x = _activate(spec.activation, layer["W"] @ x + layer["b"])
    last = params[-1]
    return last["W"] @ x + last["b"]
