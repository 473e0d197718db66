"""Context encoder, training objective, and the optimizer loop.

Training is strictly rollout-supervised: every predicted state entering a loss
is generated recursively by the variational transition from the two context
states (no teacher forcing). One context vector eta is inferred per sequence
from the first state pair and frozen for the whole rollout.

The optimizer is decoupled-weight-decay Adam with optional cosine decay of the
learning rate (paper defaults: lr 1e-4, batch 64).
"""

from dataclasses import dataclass, field, replace
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from . import integrator
from . import lagrangian as lag
from .lagrangian import LagrangianModel, LagrangianSpec, init_lagrangian
from .nets import MLPSpec, init_mlp, mlp_apply


@dataclass(frozen=True)
class EncoderSpec:
    """Maps the first n_ctx observed states (and their successive differences)
    to the sequence-level context eta.

    n_ctx = 2 is the minimal pairwise form (q_prev, q_cur, q_cur - q_prev);
    the default is 4 because two samples cannot identify a frequency or an
    acceleration, which the per-sequence physical parameters require.
    """

    d: int
    d_eta: int = 8
    hidden: tuple = (64, 64)
    n_ctx: int = 4

    def __post_init__(self):
        if self.n_ctx < 2:
            raise ValueError("context encoder needs at least two states")

    @property
    def net(self):
        return MLPSpec((2 * self.n_ctx - 1) * self.d, self.d_eta, self.hidden)


def init_encoder(spec: EncoderSpec, seed: int):
    return init_mlp(spec.net, seed)


def infer_context_fn(spec: EncoderSpec, params, ctx_states):
    ctx_states = jnp.asarray(ctx_states, dtype=jnp.float64)
    features = jnp.concatenate([
        ctx_states.reshape(-1),
        (ctx_states[1:] - ctx_states[:-1]).reshape(-1),
    ])
    return mlp_apply(spec.net, params, features)


@dataclass
class ContextEncoder:
    spec: EncoderSpec
    params: list
    no_context: bool = False

    def infer_context(self, ctx_states):
        """eta from the first n_ctx states of a sequence; frozen thereafter."""
        ctx_states = np.asarray(ctx_states, dtype=float)
        if ctx_states.shape != (self.spec.n_ctx, self.spec.d):
            raise ValueError(
                f"expected {self.spec.n_ctx} context states of dim {self.spec.d}, "
                f"got shape {ctx_states.shape}"
            )
        if self.no_context:
            return np.zeros(self.spec.d_eta)
        return np.asarray(infer_context_fn(self.spec, self.params, jnp.asarray(ctx_states)))


@dataclass(frozen=True)
class LossWeights:
    lambda_del: float = 1.0
    lambda_reg: float = 1e-3
    w: tuple = None  # per-dimension trajectory weights; None means all-ones


def trajectory_loss(predicted, target, w=None):
    """Sum over steps of the squared weighted state error."""
    predicted = jnp.asarray(predicted, dtype=jnp.float64)
    target = jnp.asarray(target, dtype=jnp.float64)
    if predicted.shape != target.shape:
        raise ValueError("predicted and target shapes differ")
    err = predicted - target
    if w is not None:
        err = jnp.asarray(w, dtype=jnp.float64) * err
    return jnp.sum(err**2)


def del_loss_fn(spec, params, h, states, eta):
    """Sum of squared DEL residuals over interior predicted triples."""

    def sq(k):
        r = integrator.del_residual_fn(spec, params, h, states[k - 1], states[k], states[k + 1], eta)
        return jnp.sum(r**2)

    centers = jnp.arange(2, states.shape[0] - 1)
    return jnp.sum(jax.vmap(sq)(centers)) if centers.size else jnp.asarray(0.0)


def reg_loss_fn(spec, params, h, states, eta):
    """Mass-conditioning penalty sum_k ||log m(q_k, eta)||^2 over predicted states."""
    if spec.variant in ("direct_scalar", "identity_mass"):
        return jnp.asarray(0.0)

    def term(q):
        return jnp.sum(jnp.log(lag.mass(spec, params, q, eta)) ** 2)

    return jnp.sum(jax.vmap(term)(states[2:]))


def del_loss(model, result: integrator.RolloutResult, eta=None):
    eta = result.eta if eta is None else np.asarray(eta, dtype=float)
    return float(del_loss_fn(model.spec, model.params, model.h,
                             jnp.asarray(result.states), jnp.asarray(eta)))


def reg_loss(model, result: integrator.RolloutResult, eta=None):
    eta = result.eta if eta is None else np.asarray(eta, dtype=float)
    return float(reg_loss_fn(model.spec, model.params, model.h,
                             jnp.asarray(result.states), jnp.asarray(eta)))


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "structured"
    d: int = 2
    d_eta: int = 8
    hidden: tuple = (64, 64)
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    steps_per_epoch: int = 10
    cosine: bool = True
    seed: int = 0
    n_iters: int = 4
    alpha: float = 1.0
    horizon: int = 8
    lambda_del: float = 1.0
    lambda_reg: float = 1e-3
    w: tuple = None
    n_ctx: int = 4
    no_context: bool = False
    no_del_loss: bool = False
    no_mass_reg: bool = False
    deterministic: bool = True
    log_every: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning rate must be > 0 and batch size >= 1")
        # tuples keep the config hashable (it is a static jit argument)
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.w is not None:
            object.__setattr__(self, "w", tuple(float(x) for x in self.w))

    @property
    def lagrangian_spec(self):
        return LagrangianSpec(self.variant, self.d, self.d_eta, tuple(self.hidden))

    @property
    def encoder_spec(self):
        return EncoderSpec(self.d, self.d_eta, tuple(self.hidden), self.n_ctx)

    @property
    def window_length(self):
        return self.n_ctx + self.horizon

    @property
    def solver(self):
        return integrator.SolverConfig(self.n_iters, self.alpha)


class TrainingDiverged(RuntimeError):
    pass


# -- decoupled-weight-decay adaptive-moment optimizer ------------------------

def adamw_init(params):
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return {"m": zeros, "v": jax.tree_util.tree_map(jnp.zeros_like, params), "t": jnp.asarray(0)}


def adamw_step(params, grads, state, lr, weight_decay, b1=0.9, b2=0.999, eps=1e-8):
    t = state["t"] + 1
    m = jax.tree_util.tree_map(lambda m_, g: b1 * m_ + (1 - b1) * g, state["m"], grads)
    v = jax.tree_util.tree_map(lambda v_, g: b2 * v_ + (1 - b2) * g**2, state["v"], grads)
    mhat_scale = 1.0 / (1 - b1**t)
    vhat_scale = 1.0 / (1 - b2**t)

    def update(p, m_, v_):
        return p - lr * (m_ * mhat_scale / (jnp.sqrt(v_ * vhat_scale) + eps) + weight_decay * p)

    params = jax.tree_util.tree_map(update, params, m, v)
    return params, {"m": m, "v": v, "t": t}


def cosine_lr(base_lr, step, total_steps):
    frac = jnp.clip(step / max(total_steps, 1), 0.0, 1.0)
    return base_lr * 0.5 * (1.0 + jnp.cos(jnp.pi * frac))


# -- training loop -----------------------------------------------------------

def _window_loss(cfg: TrainConfig, h, params, window):
    """Loss components for one (n_ctx + H)-state window.

    The first n_ctx states are context: eta is inferred from all of them, the
    rollout starts from the last context pair, and every state entering a loss
    is rollout-generated.
    """
    spec = cfg.lagrangian_spec
    n_ctx = cfg.n_ctx
    q0, q1 = window[n_ctx - 2], window[n_ctx - 1]
    if cfg.no_context:
        eta = jnp.zeros(cfg.d_eta)
    else:
        eta = infer_context_fn(cfg.encoder_spec, params["enc"], window[:n_ctx])
    states, _ = integrator.rollout_states(
        spec, params["lag"], h, q0, q1, eta, cfg.horizon, cfg.solver
    )
    l_traj = trajectory_loss(states[2:], window[n_ctx:], cfg.w)
    l_del = del_loss_fn(spec, params["lag"], h, states, eta)
    l_reg = reg_loss_fn(spec, params["lag"], h, states, eta)
    total = l_traj
    if not cfg.no_del_loss:
        total = total + cfg.lambda_del * l_del
    if not cfg.no_mass_reg:
        total = total + cfg.lambda_reg * l_reg
    return total, {"traj": l_traj, "del": l_del, "reg": l_reg}


@partial(jax.jit, static_argnums=(0,))
def _train_step(cfg, h, params, opt_state, batch, lr):
    def batch_loss(p):
        totals, comps = jax.vmap(lambda w: _window_loss(cfg, h, p, w))(batch)
        return jnp.mean(totals), jax.tree_util.tree_map(jnp.mean, comps)

    (loss, comps), grads = jax.value_and_grad(batch_loss, has_aux=True)(params)
    params, opt_state = adamw_step(params, grads, opt_state, lr, cfg.weight_decay)
    return params, opt_state, loss, comps


@dataclass
class TrainResult:
    model: LagrangianModel
    encoder: ContextEncoder
    log: list
    config: TrainConfig

    @property
    def params(self):
        return {"lag": self.model.params, "enc": self.encoder.params}

    def rollout(self, ctx_states, horizon, cfg=None):
        """Rollout from the first n_ctx states of a sequence."""
        ctx_states = np.asarray(ctx_states, dtype=float)[: self.config.n_ctx]
        eta = self.encoder.infer_context(ctx_states)
        solver = cfg if cfg is not None else integrator.SolverConfig(self.config.n_iters, self.config.alpha)
        return integrator.rollout(self.model, ctx_states[-2], ctx_states[-1], eta, horizon, solver)

    def rollout_record(self, record, horizon, cfg=None):
        """(rollout, aligned target states) for one trajectory record."""
        n_ctx = self.config.n_ctx
        if record.n_steps < n_ctx + horizon:
            raise ValueError("record shorter than context + horizon")
        result = self.rollout(record.states[:n_ctx], horizon, cfg)
        return result, record.states[n_ctx:n_ctx + horizon]


def _stack_sequences(records, min_length):
    out = []
    for rec in records:
        if rec.n_steps < min_length:
            raise ValueError("record shorter than context + horizon")
        out.append(rec.states)
    return np.stack(out)


def validation_mse(params, cfg, h, sequences):
    spec = cfg.lagrangian_spec
    n_ctx = cfg.n_ctx

    def one(seq):
        window = seq[: cfg.window_length]
        if cfg.no_context:
            eta = jnp.zeros(cfg.d_eta)
        else:
            eta = infer_context_fn(cfg.encoder_spec, params["enc"], window[:n_ctx])
        states, _ = integrator.rollout_states(
            spec, params["lag"], h, window[n_ctx - 2], window[n_ctx - 1], eta, cfg.horizon, cfg.solver
        )
        return jnp.mean((states[2:] - window[n_ctx:]) ** 2)

    return float(jnp.mean(jax.vmap(one)(jnp.asarray(sequences))))


def train(records, cfg: TrainConfig, init_params=None):
    """Train a Lagrangian model and context encoder on trajectory records.

    ``init_params`` warm-starts from a previous run's {"lag", "enc"} pytree,
    e.g. to fine-tune at a longer rollout horizon.
    """
    train_recs = [r for r in records if r.split == "train"]
    val_recs = [r for r in records if r.split == "val"] or train_recs
    if not train_recs:
        raise ValueError("dataset has no training records")
    h = train_recs[0].h
    if any(abs(r.h - h) > 1e-12 for r in records):
        raise ValueError("mixed timesteps in one training set")

    sequences = jnp.asarray(_stack_sequences(train_recs, cfg.window_length))
    val_sequences = jnp.asarray(_stack_sequences(val_recs, cfg.window_length))
    n_seq, n_steps, _ = sequences.shape
    length = cfg.window_length

    params = init_params if init_params is not None else {
        "lag": init_lagrangian(cfg.lagrangian_spec, cfg.seed),
        "enc": init_encoder(cfg.encoder_spec, cfg.seed + 100),
    }
    opt_state = adamw_init(params)
    rng = np.random.default_rng(cfg.seed)
    total_steps = cfg.epochs * cfg.steps_per_epoch
    log = []
    step = 0
    for epoch in range(cfg.epochs):
        comps_acc = []
        for _ in range(cfg.steps_per_epoch):
            idx = rng.integers(0, n_seq, size=cfg.batch_size)
            offsets = rng.integers(0, n_steps - length + 1, size=cfg.batch_size)
            batch = jnp.asarray(sequences[idx[:, None], offsets[:, None] + np.arange(length)])
            lr = cosine_lr(cfg.learning_rate, step, total_steps) if cfg.cosine else cfg.learning_rate
            params, opt_state, loss, comps = _train_step(cfg, h, params, opt_state, batch, lr)
            if not np.isfinite(float(loss)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch sequences {idx.tolist()}"
                )
            comps_acc.append({k: float(v) for k, v in comps.items()} | {"total": float(loss)})
            step += 1
        entry = {k: float(np.mean([c[k] for c in comps_acc])) for k in comps_acc[0]}
        entry["epoch"] = epoch
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
            entry["val_mse"] = validation_mse(params, cfg, h, val_sequences)
        log.append(entry)

    model = LagrangianModel(cfg.lagrangian_spec, params["lag"], h)
    encoder = ContextEncoder(cfg.encoder_spec, params["enc"], cfg.no_context)
    return TrainResult(model, encoder, log, cfg)
