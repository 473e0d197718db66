"""Exact differentiation utilities backing the dynamics and training code.

Everything here is a thin, contract-checked layer over jax: derivatives of
scalar network outputs with respect to their inputs (used inside the DEL
residual) and gradients of arbitrary scalar objectives with respect to all
parameters, including gradients that flow through input-derivative
computations (exact second-order cross terms).
"""

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree

from .nets import DimensionError, MLPSpec, mlp_apply


@dataclass(frozen=True)
class ParamVector:
    """A flat view of a parameter pytree with a named slice layout.

    The layout is fixed at construction: every leaf of the source pytree maps
    to a contiguous slice of ``values``. ``unravel`` rebuilds the pytree.
    """

    values: np.ndarray
    layout: tuple  # ((name, start, stop), ...)
    unravel: callable

    @classmethod
    def from_pytree(cls, params):
        flat, unravel = ravel_pytree(params)
        leaves_with_paths = jax.tree_util.tree_flatten_with_path(params)[0]
        layout = []
        offset = 0
        for path, leaf in leaves_with_paths:
            name = "/".join(str(p) for p in path)
            size = int(np.size(leaf))
            layout.append((name, offset, offset + size))
            offset += size
        if offset != flat.size:
            raise DimensionError("layout does not cover the flat vector")
        return cls(np.asarray(flat), tuple(layout), unravel)

    def __len__(self):
        return self.values.size

    def replace_values(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise DimensionError("replacement vector has the wrong length")
        return ParamVector(values, self.layout, self.unravel)

    def to_pytree(self):
        return self.unravel(jnp.asarray(self.values))


def forward_scalar(spec: MLPSpec, params, x) -> float:
    """Evaluate a scalar-output network; deterministic for fixed inputs."""
    out = mlp_apply(spec, params, x)
    if out.shape != (1,):
        raise DimensionError(f"expected scalar output, got shape {out.shape}")
    return float(out[0])


def input_jacobian(spec: MLPSpec, params, x) -> np.ndarray:
    """d(output)/d(input) of a scalar-output network."""
    if spec.out_dim != 1:
        raise DimensionError("input_jacobian requires a scalar-output network")
    x = jnp.asarray(x, dtype=jnp.float64)
    grad = jax.grad(lambda xi: mlp_apply(spec, params, xi)[0])(x)
    return np.asarray(grad)


def param_gradient(loss_fn, params):
    """Gradient of a scalar objective with respect to a parameter pytree.

    ``loss_fn`` may contain unrolled solver iterations and input-derivative
    evaluations; the reverse pass treats those as ordinary arithmetic, so
    second-order cross terms are exact.
    """
    value = loss_fn(params)
    if jnp.shape(value) != ():
        raise DimensionError("loss_fn must return a scalar")
    return jax.grad(loss_fn)(params)


def value_and_param_gradient(loss_fn, params):
    return jax.value_and_grad(loss_fn)(params)
