"""Comparison transitions: an unconstrained neural predictor and post-hoc
gradient-descent trajectory refinement against a learned action.

The neural transition receives (q_prev, q_cur, eta) so the comparison with the
second-order variational rollout is not confounded by velocity
unobservability; a strictly first-order variant (q_cur only) is available
behind a flag. Refinement trains no parameters: it takes a completed rollout
and descends the summed squared DEL residual of an already-trained Lagrangian
over the interior states, context pair held fixed.
"""

from dataclasses import dataclass
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from . import integrator, learn
from .integrator import RolloutResult, RolloutDivergence
from .nets import MLPSpec, init_mlp, mlp_apply


@dataclass(frozen=True)
class TransitionSpec:
    d: int
    d_eta: int = 8
    hidden: tuple = (64, 64)
    residual_head: bool = True  # predict a correction to 2 q_cur - q_prev
    first_order: bool = False  # literal q_next = f(q_cur), no velocity input

    @property
    def net(self):
        in_dim = self.d if self.first_order else 2 * self.d + self.d_eta
        return MLPSpec(in_dim, self.d, self.hidden)


def init_transition(spec: TransitionSpec, seed: int):
    return init_mlp(spec.net, seed)


def transition_step_fn(spec, params, q_prev, q_cur, eta):
    if spec.first_order:
        out = mlp_apply(spec.net, params, q_cur)
        return out + q_cur if spec.residual_head else out
    out = mlp_apply(spec.net, params, jnp.concatenate([q_prev, q_cur, eta]))
    return out + 2.0 * q_cur - q_prev if spec.residual_head else out


@dataclass
class NeuralTransition:
    spec: TransitionSpec
    params: list

    @classmethod
    def create(cls, spec, seed=0):
        return cls(spec, init_transition(spec, seed))

    def step(self, q_prev, q_cur, eta=None):
        eta = jnp.zeros(self.spec.d_eta) if eta is None else jnp.asarray(eta, dtype=jnp.float64)
        return np.asarray(transition_step_fn(
            self.spec, self.params,
            jnp.asarray(q_prev, dtype=jnp.float64), jnp.asarray(q_cur, dtype=jnp.float64), eta,
        ))


@partial(jax.jit, static_argnums=(0, 5))
def neural_rollout_states(spec, params, q0, q1, eta, horizon):
    def step(carry, _):
        q_prev, q_cur = carry
        q_next = transition_step_fn(spec, params, q_prev, q_cur, eta)
        return (q_cur, q_next), q_next

    _, preds = jax.lax.scan(step, (q0, q1), None, length=horizon)
    return jnp.concatenate([jnp.stack([q0, q1]), preds], axis=0)


def neural_rollout(nt: NeuralTransition, q_ctx0, q_ctx1, eta=None, horizon=1,
                   reference=None):
    """Recursive application of the neural transition; no residual solving.

    If ``reference`` (a LagrangianModel) is given, DEL residual norms of the
    produced trajectory are recorded against it for diagnostics.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    d = nt.spec.d
    q0 = jnp.asarray(q_ctx0, dtype=jnp.float64)
    q1 = jnp.asarray(q_ctx1, dtype=jnp.float64)
    if q0.shape != (d,) or q1.shape != (d,):
        raise ValueError(f"context states must have shape ({d},)")
    eta_v = jnp.zeros(nt.spec.d_eta) if eta is None else jnp.asarray(eta, dtype=jnp.float64)
    states = np.asarray(neural_rollout_states(nt.spec, nt.params, q0, q1, eta_v, int(horizon)))
    if not np.all(np.isfinite(states)):
        bad = int(np.argwhere(~np.isfinite(states).all(axis=1))[0, 0])
        raise RolloutDivergence(f"neural rollout produced non-finite state at step {bad}")
    norms = np.zeros(horizon)
    if reference is not None:
        ref_eta = np.zeros(reference.spec.d_eta) if eta is None else np.asarray(eta)
        norms = np.array([
            np.linalg.norm(integrator.del_residual(reference, states[k - 1], states[k], states[k + 1], ref_eta))
            for k in range(1, states.shape[0] - 1)
        ])
    return RolloutResult(states, norms, np.asarray(eta_v))


@dataclass(frozen=True)
class NeuralTrainConfig:
    d: int = 2
    d_eta: int = 8
    hidden: tuple = (64, 64)
    first_order: bool = False
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    steps_per_epoch: int = 10
    cosine: bool = True
    seed: int = 0
    horizon: int = 8
    n_ctx: int = 4
    no_context: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def transition_spec(self):
        return TransitionSpec(self.d, self.d_eta, self.hidden, True, self.first_order)

    @property
    def encoder_spec(self):
        return learn.EncoderSpec(self.d, self.d_eta, self.hidden, self.n_ctx)

    @property
    def window_length(self):
        return self.n_ctx + self.horizon


@partial(jax.jit, static_argnums=(0,))
def _neural_train_step(cfg, params, opt_state, batch, lr):
    spec = cfg.transition_spec

    def window_loss(p, window):
        n_ctx = cfg.n_ctx
        if cfg.no_context:
            eta = jnp.zeros(cfg.d_eta)
        else:
            eta = learn.infer_context_fn(cfg.encoder_spec, p["enc"], window[:n_ctx])
        states = neural_rollout_states(
            spec, p["net"], window[n_ctx - 2], window[n_ctx - 1], eta, cfg.horizon
        )
        return jnp.sum((states[2:] - window[n_ctx:]) ** 2)

    def batch_loss(p):
        return jnp.mean(jax.vmap(lambda w: window_loss(p, w))(batch))

    loss, grads = jax.value_and_grad(batch_loss)(params)
    params, opt_state = learn.adamw_step(params, grads, opt_state, lr, cfg.weight_decay)
    return params, opt_state, loss


@dataclass
class NeuralTrainResult:
    transition: NeuralTransition
    encoder: learn.ContextEncoder
    log: list
    config: NeuralTrainConfig

    @property
    def params(self):
        return {"net": self.transition.params, "enc": self.encoder.params}

    def rollout(self, ctx_states, horizon, reference=None):
        ctx_states = np.asarray(ctx_states, dtype=float)[: self.config.n_ctx]
        eta = self.encoder.infer_context(ctx_states)
        return neural_rollout(self.transition, ctx_states[-2], ctx_states[-1], eta, horizon, reference)

    def rollout_record(self, record, horizon, reference=None):
        n_ctx = self.config.n_ctx
        result = self.rollout(record.states[:n_ctx], horizon, reference)
        return result, record.states[n_ctx:n_ctx + horizon]


def train_neural(records, cfg: NeuralTrainConfig, init_params=None):
    """Trajectory-loss training of the unconstrained transition baseline."""
    train_recs = [r for r in records if r.split == "train"]
    if not train_recs:
        raise ValueError("dataset has no training records")
    sequences = jnp.asarray(np.stack([r.states for r in train_recs]))
    n_seq, n_steps, _ = sequences.shape
    length = cfg.window_length

    params = init_params if init_params is not None else {
        "net": init_transition(cfg.transition_spec, cfg.seed),
        "enc": learn.init_encoder(cfg.encoder_spec, cfg.seed + 100),
    }
    opt_state = learn.adamw_init(params)
    rng = np.random.default_rng(cfg.seed)
    total_steps = cfg.epochs * cfg.steps_per_epoch
    log = []
    step = 0
    for epoch in range(cfg.epochs):
        losses = []
        for _ in range(cfg.steps_per_epoch):
            idx = rng.integers(0, n_seq, size=cfg.batch_size)
            offsets = rng.integers(0, n_steps - length + 1, size=cfg.batch_size)
            batch = jnp.asarray(sequences[idx[:, None], offsets[:, None] + np.arange(length)])
            lr = learn.cosine_lr(cfg.learning_rate, step, total_steps) if cfg.cosine else cfg.learning_rate
            params, opt_state, loss = _neural_train_step(cfg, params, opt_state, batch, lr)
            if not np.isfinite(float(loss)):
                raise learn.TrainingDiverged(f"non-finite loss at epoch {epoch}")
            losses.append(float(loss))
            step += 1
        log.append({"epoch": epoch, "traj": float(np.mean(losses))})
    transition = NeuralTransition(cfg.transition_spec, params["net"])
    encoder = learn.ContextEncoder(cfg.encoder_spec, params["enc"], cfg.no_context)
    return NeuralTrainResult(transition, encoder, log, cfg)


# -- post-hoc gradient-descent trajectory refinement -------------------------

@dataclass(frozen=True)
class RefinementConfig:
    gd_iters: int = 20
    gd_step: float = None  # None: 0.02 h^2, below the residual curvature bound

    def __post_init__(self):
        if self.gd_iters < 0 or (self.gd_step is not None and self.gd_step <= 0):
            raise ValueError("gd_iters must be >= 0 and gd_step > 0")

    def resolve(self, h):
        # plain GD is only stable below ~h^2/16: the squared-residual Hessian
        # is dominated by the kinetic second-difference operator (1/h^2 scale)
        if self.gd_step is not None:
            return self
        return RefinementConfig(self.gd_iters, 0.02 * h * h)


@partial(jax.jit, static_argnums=(0, 5))
def _refine_states(spec, params, h, states, eta, cfg):
    context = states[:2]

    def objective(free):
        full = jnp.concatenate([context, free], axis=0)

        def sq(k):
            r = integrator.del_residual_fn(spec, params, h, full[k - 1], full[k], full[k + 1], eta)
            return jnp.sum(r**2)

        return jnp.sum(jax.vmap(sq)(jnp.arange(1, full.shape[0] - 1)))

    def body(free, _):
        value, grad = jax.value_and_grad(objective)(free)
        return free - cfg.gd_step * grad, value

    free0 = states[2:]
    free, values = jax.lax.scan(body, free0, None, length=cfg.gd_iters)
    final = objective(free)
    return jnp.concatenate([context, free], axis=0), values, final


def gd_refine(model, initial: RolloutResult, eta=None, cfg=RefinementConfig()):
    """Plain gradient descent on the summed squared DEL residual.

    The two context states stay fixed; the terminal state is free. The
    objective history is recorded (monotonicity is monitored, not assumed).
    """
    if initial.states.shape[0] < 3:
        raise ValueError("refinement needs a rollout of length >= 3")
    cfg = cfg.resolve(model.h)
    eta_v = initial.eta if eta is None else np.asarray(eta, dtype=float)
    if cfg.gd_iters == 0:
        result = RolloutResult(initial.states.copy(), initial.residual_norms.copy(), np.asarray(eta_v))
        result.objective_history = np.zeros(0)
        return result
    states, history, final = _refine_states(
        model.spec, model.params, model.h,
        jnp.asarray(initial.states), jnp.asarray(eta_v), cfg,
    )
    states = np.asarray(states)
    if not np.all(np.isfinite(states)):
        raise RolloutDivergence("refinement produced non-finite states; lower gd_step")
    norms = np.array([
        np.linalg.norm(integrator.del_residual(model, states[k - 1], states[k], states[k + 1], eta_v))
        for k in range(1, states.shape[0] - 1)
    ])
    result = RolloutResult(states, norms, np.asarray(eta_v))
    result.objective_history = np.append(np.asarray(history), float(final))
    return result
