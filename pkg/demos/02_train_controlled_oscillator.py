"""Train the variational model on the controlled-oscillator diagnostic.

A small (~2 minute) training run on 2-D harmonic oscillators with per-sequence
mass/stiffness. The learned discrete Lagrangian is evaluated against an
unconstrained neural transition and against gradient-descent trajectory
refinement of that neural rollout, using the three physical-consistency
metrics: PIS of the true energy, learned-energy drift, and rollout MSE.

The full-scale recipe used by the acceptance suite adds longer fine-tuning
stages (see tests/test_acceptance.py); this demo uses a reduced budget so it
finishes quickly, so expect scores below the acceptance-level ones.

Run:  python3 demos/02_train_controlled_oscillator.py
"""

import numpy as np

from varwm import baselines, dynamics, learn, metrics

print("generating controlled-oscillator dataset ...")
records = dynamics.generate_controlled_dataset(n_train=48, n_val=8, n_test=16, seed=0)
tests = [r for r in records if r.split == "test"]

print("training variational model (reduced budget) ...")
cfg = learn.TrainConfig(d=2, epochs=120, steps_per_epoch=10, batch_size=48,
                        horizon=8, learning_rate=2e-3, seed=0, log_every=40)
lawm = learn.train(records, cfg)

print("training neural-transition baseline ...")
ncfg = baselines.NeuralTrainConfig(d=2, epochs=120, steps_per_epoch=10, batch_size=48,
                                   horizon=8, learning_rate=2e-3, seed=0, log_every=40)
neural = baselines.train_neural(records, ncfg)

HORIZON = 128
rows = []
for name, result in [("variational", lawm), ("neural", neural)]:
    pis_vals, mses, drifts = [], [], []
    for rec in tests:
        rolled, targets = result.rollout_record(rec, HORIZON)
        scores = metrics.quantity_pis(rolled.states, rec.h, rec.family, rec.params)
        pis_vals.append(np.mean(list(scores.values())))
        mses.append(metrics.rollout_errors(rolled.predicted, targets)[0])
        drifts.append(metrics.energy_drift(lawm.model, rolled))
    rows.append((name, np.mean(pis_vals), np.median(mses), np.mean(drifts)))

# refinement: gradient descent on the squared DEL residual of the neural rollout
pis_vals, drifts = [], []
for rec in tests:
    rolled, _ = neural.rollout_record(rec, HORIZON)
    eta = lawm.encoder.infer_context(rec.states[: cfg.n_ctx])
    refined = baselines.gd_refine(lawm.model, rolled, eta)
    scores = metrics.quantity_pis(refined.states, rec.h, rec.family, rec.params)
    pis_vals.append(np.mean(list(scores.values())))
    drifts.append(metrics.energy_drift(lawm.model, refined))
rows.append(("gd-refined", np.mean(pis_vals), float("nan"), np.mean(drifts)))

print(f"\n{'method':<12} {'PIS@128':>8} {'med MSE':>9} {'drift':>7}")
for name, p, m, d in rows:
    print(f"{name:<12} {p:>8.4f} {m:>9.4f} {d:>7.4f}")
