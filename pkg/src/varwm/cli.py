"""Command-line harness: generate / train / rollout / audit / ablate / report.

Output root defaults to ./runs, overridable with the VARWM_OUT environment
variable or --out. Exit codes: 0 success, 2 bad arguments or missing inputs,
3 diverged computation.
"""

import argparse
import json
import sys
from pathlib import Path

from . import dynamics, harness, integrator, learn

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", default=True,
                   help="ordered reductions and seeded sampling (always on for CPU)")
    p.add_argument("--out", type=Path, default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="varwm",
        description="Variational world model: least-action rollouts in state space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write benchmark datasets")
    _add_common(p)
    p.add_argument("--families", nargs="*", default=None,
                   help="subset of motion families (default: all + oscillator diagnostic)")
    p.add_argument("--n-train", type=int, default=60)
    p.add_argument("--n-val", type=int, default=10)
    p.add_argument("--n-test", type=int, default=20)

    p = sub.add_parser("train", help="train a model on one dataset file")
    _add_common(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--method", choices=("lawm", "neural"), default="lawm")
    p.add_argument("--variant", default="structured")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--steps-per-epoch", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=48)
    p.add_argument("--learning-rate", type=float, default=2e-3)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--n-iters", type=int, default=4)
    p.add_argument("--finetune-horizon", type=int, default=None,
                   help="optional second stage at this rollout horizon")
    p.add_argument("--finetune-epochs", type=int, default=50)

    p = sub.add_parser("rollout", help="roll one sequence and dump inspection files")
    _add_common(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--horizon", type=int, default=128)

    p = sub.add_parser("audit", help="long-horizon audit across motion families")
    _add_common(p)
    p.add_argument("--data-dir", type=Path, required=True)
    p.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2, 3, 4])
    p.add_argument("--horizons", type=int, nargs="*", default=list(harness.AUDIT_HORIZONS))
    p.add_argument("--families", nargs="*", default=None)
    p.add_argument("--n-eval", type=int, default=50)
    p.add_argument("--epochs", type=int, default=150)

    p = sub.add_parser("ablate", help="architecture and solver-iteration sweeps")
    _add_common(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2, 3])
    p.add_argument("--horizon", type=int, default=128)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--n-eval", type=int, default=20)

    p = sub.add_parser("report", help="verify and re-render a machine report")
    _add_common(p)
    p.add_argument("report_file", type=Path)

    return parser


def _out_dir(args, sub):
    root = args.out if args.out is not None else harness.default_out_root()
    out = Path(root) / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (FileNotFoundError, IndexError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (integrator.RolloutDivergence, learn.TrainingDiverged) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


def _dispatch(args):
    if args.command == "generate":
        out = _out_dir(args, "datasets")
        paths = harness.run_generate(
            out, families=args.families, n_train=args.n_train,
            n_val=args.n_val, n_test=args.n_test, seed=args.seed,
        )
        for name, path in paths.items():
            print(f"{name}: {path}")
        return EXIT_OK

    if args.command == "train":
        out = _out_dir(args, "checkpoints")
        ckpt = out / f"{args.dataset.stem}_{args.method}_seed{args.seed}.json"
        overrides = dict(
            epochs=args.epochs, steps_per_epoch=args.steps_per_epoch,
            batch_size=args.batch_size, learning_rate=args.learning_rate,
            horizon=args.horizon, seed=args.seed,
        )
        if args.method == "lawm":
            overrides["variant"] = args.variant
            overrides["n_iters"] = args.n_iters
        stages = None
        if args.finetune_horizon:
            stages = [dict(horizon=args.finetune_horizon, epochs=args.finetune_epochs,
                           learning_rate=args.learning_rate / 4)]
        result = harness.run_train(args.dataset, ckpt, method=args.method,
                                   stages=stages, **overrides)
        last = result.log[-1]
        print(f"checkpoint: {ckpt}")
        print(f"final epoch: {json.dumps(last)}")
        return EXIT_OK

    if args.command == "rollout":
        out = _out_dir(args, "rollouts")
        rolled, _ = harness.run_rollout(
            args.checkpoint, args.dataset, args.index, args.horizon, out)
        print(f"wrote {out}/predicted.jsonl truth.jsonl series.json "
              f"(max residual {rolled.residual_norms.max():.3e})")
        return EXIT_OK

    if args.command == "audit":
        out = _out_dir(args, "audit")
        result = harness.run_audit(
            args.data_dir, out, seeds=tuple(args.seeds), horizons=tuple(args.horizons),
            families=args.families, n_eval=args.n_eval,
            lawm_overrides={"epochs": args.epochs}, neural_overrides={"epochs": args.epochs},
        )
        print(harness.run_report(out / "audit.jsonl"))
        return EXIT_OK

    if args.command == "ablate":
        out = _out_dir(args, "ablation")
        harness.run_ablate(
            args.dataset, out, seeds=tuple(args.seeds), horizon=args.horizon,
            n_eval=args.n_eval,
            lawm_overrides={"epochs": args.epochs}, neural_overrides={"epochs": args.epochs},
        )
        print(harness.run_report(out / "ablation.jsonl"))
        return EXIT_OK

    if args.command == "report":
        print(harness.run_report(args.report_file))
        return EXIT_OK

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
