import numpy as np
import pytest

from varwm import baselines, dynamics, learn
from varwm.baselines import (
    NeuralTrainConfig,
    NeuralTransition,
    RefinementConfig,
    TransitionSpec,
    gd_refine,
    neural_rollout,
    train_neural,
)
from varwm.integrator import RolloutResult, SolverConfig, rollout
from varwm.lagrangian import LagrangianModel


def test_residual_head_extrapolates_at_zero_weights():
    # zero all weights: the residual head reduces to constant-velocity motion
    spec = TransitionSpec(d=2)
    nt = NeuralTransition.create(spec, seed=0)
    zeroed = [{"W": np.zeros_like(np.asarray(l["W"])), "b": np.zeros_like(np.asarray(l["b"]))}
              for l in nt.params]
    nt = NeuralTransition(spec, zeroed)
    q_prev, q_cur = np.array([0.0, 1.0]), np.array([0.5, 1.5])
    np.testing.assert_allclose(nt.step(q_prev, q_cur), 2 * q_cur - q_prev, atol=1e-15)


def test_first_order_variant_ignores_previous_state():
    spec = TransitionSpec(d=1, first_order=True)
    nt = NeuralTransition.create(spec, seed=1)
    a = nt.step(np.array([5.0]), np.array([1.0]))
    b = nt.step(np.array([-5.0]), np.array([1.0]))
    np.testing.assert_array_equal(a, b)


def test_neural_rollout_shapes():
    nt = NeuralTransition.create(TransitionSpec(d=2), seed=2)
    result = neural_rollout(nt, np.zeros(2), np.full(2, 0.1), horizon=5)
    assert result.states.shape == (7, 2)
    assert result.residual_norms.shape == (5,)


def test_neural_rollout_records_reference_residuals():
    nt = NeuralTransition.create(TransitionSpec(d=1, d_eta=8), seed=3)
    reference = LagrangianModel.analytic(d=1, h=0.1, m=1.0, k=1.0)
    result = neural_rollout(nt, np.array([1.0]), np.array([0.99]), horizon=4,
                            reference=reference)
    assert np.all(result.residual_norms >= 0)
    assert result.residual_norms.shape == (4,)


def _tiny_records():
    return dynamics.generate_controlled_dataset(6, 2, 2, d=1, n_steps=40, seed=7)


def test_train_neural_runs_and_is_deterministic():
    records = _tiny_records()
    cfg = NeuralTrainConfig(d=1, epochs=2, steps_per_epoch=2, batch_size=4,
                            horizon=4, hidden=(8,))
    a = train_neural(records, cfg)
    b = train_neural(records, cfg)
    from varwm.autodiff import ParamVector

    np.testing.assert_array_equal(
        ParamVector.from_pytree(a.params).values,
        ParamVector.from_pytree(b.params).values,
    )
    rolled, targets = a.rollout_record(records[0], horizon=5)
    assert rolled.predicted.shape == targets.shape == (5, 1)


def test_refinement_config_validation():
    with pytest.raises(ValueError):
        RefinementConfig(gd_iters=-1)
    with pytest.raises(ValueError):
        RefinementConfig(gd_step=0.0)


def _oscillator_rollout(horizon=20, n_iters=8):
    model = LagrangianModel.analytic(d=1, h=0.1, m=1.0, k=1.0)
    result = rollout(model, np.array([1.0]), np.array([0.995]), horizon=horizon,
                     cfg=SolverConfig(n_iters=n_iters))
    return model, result


def test_gd_refine_zero_iters_is_identity():
    model, result = _oscillator_rollout()
    refined = gd_refine(model, result, cfg=RefinementConfig(gd_iters=0))
    np.testing.assert_array_equal(refined.states, result.states)
    assert refined.objective_history.size == 0


def test_gd_refine_fixes_context_states():
    model, result = _oscillator_rollout()
    noisy = RolloutResult(result.states + np.where(
        np.arange(result.states.shape[0])[:, None] >= 2, 0.01, 0.0),
        result.residual_norms, result.eta)
    refined = gd_refine(model, noisy, cfg=RefinementConfig(gd_iters=10))
    np.testing.assert_array_equal(refined.states[:2], noisy.states[:2])
    assert not np.array_equal(refined.states[2:], noisy.states[2:])


def test_gd_refine_reduces_residual_objective():
    model, result = _oscillator_rollout(n_iters=1)  # sloppy solve leaves residual
    refined = gd_refine(model, result, cfg=RefinementConfig(gd_iters=50))
    history = refined.objective_history
    assert history[-1] < history[0]


def test_gd_refine_near_idempotent_at_stationarity():
    # a well-solved trajectory is already near a residual zero: refinement
    # moves it by at most the solve tolerance scale
    model, result = _oscillator_rollout(n_iters=30)
    refined = gd_refine(model, result, cfg=RefinementConfig(gd_iters=20))
    assert np.max(np.abs(refined.states - result.states)) < 1e-9


def test_gd_refine_needs_three_states():
    model, result = _oscillator_rollout()
    short = RolloutResult(result.states[:2], np.zeros(0), result.eta)
    with pytest.raises(ValueError):
        gd_refine(model, short)


def test_neural_config_window_length():
    cfg = NeuralTrainConfig(d=1, horizon=8, n_ctx=4)
    assert cfg.window_length == 12
