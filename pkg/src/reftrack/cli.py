"""Command-line interface.

Subcommands:
    experiment   run the configured variants and export summary/curves
    train        train a single variant for one simulation seed
    tune-pi      fit the PI gains on the training references
    evaluate     score a saved actor checkpoint on the test references
    export-refs  dump generated reference trajectories to CSV
    init-config  write the default configuration file

Exit codes: 0 success, 2 configuration/usage error, 3 numeric or
training failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .harness import (
    PI_VARIANT,
    VARIANT_SPECS,
    ExperimentConfig,
    apply_preset,
    derive_seeds,
    env_for,
    evaluate_actor,
    export_references,
    load_config,
    make_reference,
    run_experiment,
    run_variant,
    save_config,
)
from .ppo import TrainingDiverged

EXPERIMENT_CHOICES = ("smooth", "jumps", "discontinuous", "offset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reftrack",
        description="Tracking-control benchmark on a clutch drive-train simulator.",
    )
    parser.add_argument("--version", action="version", version=f"reftrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_variant=False):
        p.add_argument("--config", help="flat YAML config file")
        p.add_argument("--experiment", choices=EXPERIMENT_CHOICES)
        p.add_argument("--seeds", type=int, help="number of independent simulations")
        p.add_argument("--master-seed", type=int, dest="master_seed")
        p.add_argument("--preset", choices=("desk", "full"))
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("--out", help="output directory")
        if with_variant:
            p.add_argument(
                "--variant",
                action="append",
                help="controller variant (repeatable); default comes from the config",
            )

    common(sub.add_parser("experiment", help="run the full benchmark protocol"), True)
    train_p = sub.add_parser("train", help="train one variant for one seed")
    common(train_p, True)
    train_p.add_argument("--seed-index", type=int, default=0, dest="seed_index")
    common(sub.add_parser("tune-pi", help="tune the PI baseline"))
    eval_p = sub.add_parser("evaluate", help="evaluate a saved actor checkpoint")
    common(eval_p, True)
    eval_p.add_argument("--checkpoint", required=True)
    refs_p = sub.add_parser("export-refs", help="dump reference trajectories to CSV")
    common(refs_p)
    refs_p.add_argument("--count", type=int, default=10)
    init_p = sub.add_parser("init-config", help="write the default config file")
    init_p.add_argument("--out", required=True)
    return parser


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.preset:
        cfg = apply_preset(cfg, args.preset)
    updates = {}
    if getattr(args, "experiment", None):
        updates["experiment"] = args.experiment
    if getattr(args, "seeds", None) is not None:
        updates["seeds"] = args.seeds
    if getattr(args, "master_seed", None) is not None:
        updates["master_seed"] = args.master_seed
    if getattr(args, "jobs", None) is not None:
        updates["jobs"] = args.jobs
    if getattr(args, "variant", None):
        updates["variants"] = tuple(args.variant)
    if updates:
        import dataclasses

        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def _cmd_experiment(args) -> int:
    cfg = _resolve_config(args)
    out = args.out or "results"
    results = run_experiment(cfg, out)
    print(f"experiment={cfg.experiment} master_seed={cfg.master_seed} -> {out}")
    for res in results:
        print(
            f"  {res.variant}: mean={res.mean:.6g} std={res.std:.6g} "
            f"median={res.median:.6g} seeds_ok={res.n_seeds_ok}"
        )
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    variants = [v for v in cfg.variants if v != PI_VARIANT]
    if getattr(args, "variant", None):
        variants = list(args.variant)
    if len(variants) != 1:
        raise SystemExit("train needs exactly one --variant")
    import dataclasses

    cfg = dataclasses.replace(cfg, variants=(variants[0],), seeds=max(args.seed_index + 1, 1))
    out = args.out or "results"
    res = run_variant(cfg, variants[0], out)
    print(f"trained {variants[0]} ({cfg.experiment}): mean={res.mean:.6g} std={res.std:.6g}")
    return 0


def _cmd_tune_pi(args) -> int:
    cfg = _resolve_config(args)
    res = run_variant(cfg, PI_VARIANT, args.out)
    gains = res.pi_gains
    print(f"tuned PI ({cfg.experiment}): k_p={gains.k_p:.4f} k_i={gains.k_i:.4f}")
    print(f"test rewards: mean={res.mean:.6g} std={res.std:.6g}")
    if args.out:
        path = os.path.join(args.out, f"pi_tuning_{cfg.experiment}.json")
        with open(path, "w") as fh:
            json.dump(res.pi_report, fh, indent=2, sort_keys=True)
        print(f"report -> {path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    variants = list(args.variant or [])
    if len(variants) != 1:
        raise SystemExit("evaluate needs exactly one --variant (to pick the argument layout)")
    spec = VARIANT_SPECS[variants[0]]
    plan = derive_seeds(cfg)
    test_trajs = [make_reference(cfg, s) for s in plan.test_seeds]
    rewards = evaluate_actor(
        args.checkpoint, spec, test_trajs, env_for(cfg), cfg.ppo.steps_per_episode
    )
    print(
        f"evaluated {args.checkpoint} on {len(test_trajs)} refs: "
        f"mean={rewards.mean():.6g} std={rewards.std():.6g}"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "evaluation.csv")
        with open(path, "w", newline="") as fh:
            fh.write("ref_index,episodic_reward\n")
            for i, r in enumerate(rewards):
                fh.write(f"{i},{r:.12g}\n")
        print(f"per-reference rewards -> {path}")
    return 0


def _cmd_export_refs(args) -> int:
    cfg = _resolve_config(args)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"references_{cfg.experiment}.csv")
    export_references(cfg, args.count, path)
    print(f"wrote {args.count} {cfg.experiment} references -> {path}")
    return 0


def _cmd_init_config(args) -> int:
    save_config(ExperimentConfig(), args.out)
    print(f"default config -> {args.out}")
    return 0


_COMMANDS = {
    "experiment": _cmd_experiment,
    "train": _cmd_train,
    "tune-pi": _cmd_tune_pi,
    "evaluate": _cmd_evaluate,
    "export-refs": _cmd_export_refs,
    "init-config": _cmd_init_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
