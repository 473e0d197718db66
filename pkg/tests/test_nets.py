import numpy as np
import pytest
from hypothesis import given, strategies as st

from varwm.nets import ALLOWED_ACTIVATIONS, DimensionError, MLPSpec, init_mlp, mlp_apply


def test_layer_dims():
    spec = MLPSpec(3, 2, hidden=(16, 8))
    assert spec.layer_dims == (3, 16, 8, 2)


def test_rejects_unknown_activation():
    with pytest.raises(ValueError):
        MLPSpec(2, 1, activation="relu")  # kink would break the solver's smoothness


def test_output_shape_and_dtype():
    spec = MLPSpec(4, 3)
    params = init_mlp(spec, seed=0)
    y = mlp_apply(spec, params, np.arange(4.0))
    assert y.shape == (3,)
    assert y.dtype == np.float64


def test_rejects_wrong_input_dim():
    spec = MLPSpec(4, 3)
    params = init_mlp(spec, seed=0)
    with pytest.raises(DimensionError):
        mlp_apply(spec, params, np.zeros(5))


def test_init_is_seed_deterministic():
    spec = MLPSpec(3, 2)
    a = init_mlp(spec, seed=7)
    b = init_mlp(spec, seed=7)
    c = init_mlp(spec, seed=8)
    for la, lb in zip(a, b):
        assert np.array_equal(np.asarray(la["W"]), np.asarray(lb["W"]))
    assert not np.array_equal(np.asarray(a[0]["W"]), np.asarray(c[0]["W"]))


def test_zero_biases_at_init():
    params = init_mlp(MLPSpec(3, 2), seed=0)
    for layer in params:
        assert np.all(np.asarray(layer["b"]) == 0.0)


def test_identity_activation_is_affine():
    # with identity activation the network is a linear map plus bias
    spec = MLPSpec(2, 2, hidden=(3,), activation="identity")
    params = init_mlp(spec, seed=1)
    x1, x2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    y0 = mlp_apply(spec, params, np.zeros(2))
    y1 = mlp_apply(spec, params, x1) - y0
    y2 = mlp_apply(spec, params, x2) - y0
    combined = mlp_apply(spec, params, 2.0 * x1 + 3.0 * x2)
    np.testing.assert_allclose(combined, y0 + 2.0 * y1 + 3.0 * y2, atol=1e-12)


@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 100))
def test_glorot_bound_holds(in_dim, out_dim, seed):
    spec = MLPSpec(in_dim, out_dim, hidden=(6,))
    params = init_mlp(spec, seed=seed)
    for layer in params:
        w = np.asarray(layer["W"])
        fan_out, fan_in = w.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(w) <= bound)


def test_all_allowed_activations_run():
    for act in ALLOWED_ACTIVATIONS:
        spec = MLPSpec(2, 1, activation=act)
        y = mlp_apply(spec, init_mlp(spec, seed=0), np.ones(2))
        assert np.isfinite(y).all()
