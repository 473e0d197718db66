"""Physical-consistency and accuracy metrics.

PIS (physical invariance score) of a quantity series C is
(1 + sigma_C / (|mu_C| + eps))^-1 with the population standard deviation, so a
constant series scores exactly 1 regardless of length. Quantities are
estimated directly in state space: velocities by central differences,
accelerations by central second differences (exact on polynomial motion),
angular velocity by first differences of the unwrapped angle.
"""

import numpy as np

from . import dynamics, integrator
from . import lagrangian as lag

DEFAULT_EPS = 1e-8


def pis(values, eps=DEFAULT_EPS):
    """Invariance score in (0, 1]; 1 iff the series is constant."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("PIS needs a 1-d series of length >= 2")
    if not np.all(np.isfinite(values)):
        raise ValueError("PIS series must be finite")
    # population std of the shifted series: mathematically identical, but a
    # constant series gives residues that are exactly zero (score exactly 1)
    sigma = (values - values[0]).std()
    mu = values.mean()
    return float(1.0 / (1.0 + sigma / (abs(mu) + eps)))


def _component(states, family, name):
    fam = (dynamics.CONTROLLED_OSCILLATOR if family == dynamics.CONTROLLED_OSCILLATOR.name
           else dynamics.FAMILIES[family])
    if name not in fam.components:
        raise ValueError(f"family {family!r} has no state component {name!r}")
    return states[:, fam.components.index(name)]


def _central_velocity(x, h):
    return (x[2:] - x[:-2]) / (2.0 * h)


def _central_acceleration(x, h):
    return (x[2:] - 2.0 * x[1:-1] + x[:-2]) / h**2


def _fit_circle_center(x, y):
    # Kasa fit: linear least squares, exact for points on a true circle.
    a = np.stack([x, y, np.ones_like(x)], axis=1)
    b = -(x**2 + y**2)
    (d, e, _), *_ = np.linalg.lstsq(a, b, rcond=None)
    return -d / 2.0, -e / 2.0


def _angle_series(states, h, family):
    fam = dynamics.FAMILIES[family]
    if "angle" in fam.components:
        angle = _component(states, family, "angle")
    else:
        x = _component(states, family, "x")
        y = _component(states, family, "y")
        cx, cy = _fit_circle_center(x, y)
        angle = np.arctan2(y - cy, x - cx)
    return np.unwrap(angle)


def estimate_quantity(states, h, family, quantity, params=None):
    """Time series of the invariant quantity scored for a motion family."""
    states = np.asarray(states, dtype=float)
    if quantity == "v_x":
        return _central_velocity(_component(states, family, "x"), h)
    if quantity == "v_y":
        return _central_velocity(_component(states, family, "y"), h)
    if quantity == "a_x":
        return _central_acceleration(_component(states, family, "x"), h)
    if quantity == "a_y":
        return _central_acceleration(_component(states, family, "y"), h)
    if quantity == "omega":
        return np.diff(_angle_series(states, h, family)) / h
    if quantity == "delta_r":
        return np.diff(_component(states, family, "r")) / h
    if quantity == "delta_l":
        name = "s" if family == "motion3d" else "l"
        return np.diff(_component(states, family, name)) / h
    if quantity == "damped_energy":
        # decay-compensated oscillator energy e^{2 zeta t} (v^2 + omega^2 y^2)/2;
        # invariant up to O(zeta/omega) ripple on the exact damped trajectory
        if params is None:
            raise ValueError("damped energy needs the per-sequence (zeta, omega)")
        zeta, omega = float(params["zeta"]), float(params["omega"])
        y = _component(states, family, "y")
        v = _central_velocity(y, h)
        t = np.arange(1, states.shape[0] - 1) * h
        return np.exp(2.0 * zeta * t) * 0.5 * (v**2 + omega**2 * y[1:-1] ** 2)
    if quantity == "energy":
        if params is None:
            raise ValueError("energy series needs the per-sequence (m, k) parameters")
        m = np.asarray(params["m"], dtype=float)
        k = np.asarray(params["k"], dtype=float)
        gamma = float(params.get("mass_gamma", 0.0))
        v = (states[2:] - states[:-2]) / (2.0 * h)
        q = states[1:-1]
        inertia = m * (1.0 + gamma * np.sin(q))
        return 0.5 * np.sum(inertia * v**2, axis=1) + 0.5 * np.sum(k * q**2, axis=1)
    raise ValueError(f"unknown quantity {quantity!r}")


def quantity_pis(states, h, family, params=None, eps=DEFAULT_EPS):
    """PIS per scored quantity for one trajectory of a family."""
    fam = (dynamics.CONTROLLED_OSCILLATOR if family == dynamics.CONTROLLED_OSCILLATOR.name
           else dynamics.FAMILIES[family])
    return {
        q: pis(estimate_quantity(states, h, family, q, params), eps)
        for q in fam.quantities
    }


def energy_drift(model, result: integrator.RolloutResult, eta=None, eps=DEFAULT_EPS):
    """Mean relative deviation of the learned energy from its start-of-rollout value.

    Discrete velocity v_k = (q_k - q_{k-1}) / h; the baseline is taken at the
    last context state using the forward difference of the context pair.
    """
    states = result.states
    if states.shape[0] < 3:
        raise ValueError("rollout too short for energy drift")
    eta = result.eta if eta is None else eta
    h = model.h
    velocities = (states[1:] - states[:-1]) / h
    energies = np.array([
        model.energy(states[k], velocities[k - 1], eta)
        for k in range(1, states.shape[0])
    ])
    base = energies[0]
    drift = np.abs(energies[1:] - base) / (abs(base) + eps)
    return float(drift.mean())


def stationary_action_residual(model, result: integrator.RolloutResult, eta=None):
    """Mean squared DEL residual over interior predicted triples."""
    states = result.states
    if states.shape[0] < 3:
        raise ValueError("need at least one interior triple")
    eta = result.eta if eta is None else eta
    sq = [
        float(np.sum(integrator.del_residual(model, states[k - 1], states[k], states[k + 1], eta) ** 2))
        for k in range(2, states.shape[0] - 1)
    ]
    if not sq:
        # horizon 1: only the solved triple exists
        sq = [float(np.sum(integrator.del_residual(model, states[0], states[1], states[2], eta) ** 2))]
    return float(np.mean(sq))


def rollout_errors(predicted, target):
    """(rollout MSE, normalized state RMSE) between aligned trajectories."""
    predicted = np.asarray(predicted, dtype=float)
    target = np.asarray(target, dtype=float)
    if predicted.shape != target.shape:
        raise ValueError("predicted and target shapes differ")
    err = predicted - target
    mse = float(np.mean(err**2))
    rmse = np.sqrt(np.mean(err**2, axis=0))
    scale = target.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mse, float(np.mean(rmse / scale))


def mpis_motion_balanced(table):
    """Average PIS within each family first, then across families.

    ``table`` maps family -> {quantity -> score}.
    """
    per_family = [np.mean(list(qs.values())) for qs in table.values()]
    return float(np.mean(per_family))


def mpis_row_wise(table):
    """Flat average over all (family, quantity) rows."""
    rows = [v for qs in table.values() for v in qs.values()]
    return float(np.mean(rows))
