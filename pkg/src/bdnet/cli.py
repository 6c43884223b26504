"""Command-line interface.

Subcommands: train-clean, mask gen-static, mask gen-adaptive, attack bib,
attack bid, evaluate, defend, sweep, run.  Config-driven commands read the
flat dotted-key format (see config.py); failures exit non-zero and leave a
machine-readable error record next to the outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import masks as masks_mod
from . import metrics as metrics_mod
from . import poison
from .adaptive import DeepFoolParams, UniversalParams, build_universal_mask
from .config import ConfigError, config_from_text, load_config
from .defenses import DefenseSpec, evaluate_defense
from .errors import BdnetError
from .experiment import run_experiment, run_sweep
from .nn.checkpoint import load_model, save_model

log = logging.getLogger("bdnet")


def parse_dataset_ref(ref: str) -> data_mod.LabeledDataset:
    """Dataset references: ``idx:images,labels`` | ``synthetic:k=v,...`` | ``digits:k=v,...``."""
    kind, _, rest = ref.partition(":")
    if kind == "idx":
        try:
            images, labels = rest.split(",")
        except ValueError:
            raise ConfigError(f"idx reference needs 'idx:images,labels', got {ref!r}")
        return data_mod.load_idx(images.strip(), labels.strip())
    opts = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        if "=" not in item:
            raise ConfigError(f"dataset option {item!r} is not key=value")
        k, _, v = item.partition("=")
        opts[k.strip()] = int(v)
    if kind == "synthetic":
        return data_mod.generate_synthetic(
            opts.get("classes", 8), opts.get("per_class", 100), opts.get("size", 32),
            opts.get("channels", 3), opts.get("seed", 0))
    if kind == "digits":
        return data_mod.generate_digits(opts.get("per_class", 100), opts.get("size", 28),
                                        opts.get("seed", 0))
    raise ConfigError(f"unknown dataset kind {kind!r} in {ref!r}")


def _error_record(exc: Exception, out_dir: str | None):
    record = {"error": type(exc).__name__, "message": str(exc)}
    line = json.dumps(record, sort_keys=True)
    print(line, file=sys.stderr)
    if out_dir:
        try:
            path = Path(out_dir)
            path.mkdir(parents=True, exist_ok=True)
            (path / "error.json").write_text(line + "\n", encoding="utf-8")
        except OSError:
            pass


def _load_cfg(args):
    cfg = load_config(args.config)
    if getattr(args, "out", None):
        import dataclasses
        cfg = dataclasses.replace(cfg, out=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    run_experiment(cfg)
    print(f"run complete: {cfg.out}/summary.csv")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    axis = args.axis or cfg.sweep_axis
    if not axis:
        raise ConfigError("sweep needs --axis or sweep.axis in the config")
    run_sweep(cfg, axis)
    print(f"sweep complete: {cfg.out}/sweep.csv")
    return 0


def cmd_attack(args) -> int:
    cfg = _load_cfg(args)
    want = "BIB" if args.mode == "bib" else "BID"
    if not cfg.scenario.startswith(want):
        raise ConfigError(f"attack {args.mode} needs a {want}-* scenario, config has {cfg.scenario}")
    run_experiment(cfg)
    print(f"attack {args.mode} complete: {cfg.out}/summary.csv")
    return 0


def cmd_train_clean(args) -> int:
    cfg = _load_cfg(args)
    from .experiment import make_splits, prepare_dataset
    pool, fixed_test = prepare_dataset(cfg)
    splits = make_splits(cfg, pool, fixed_test)
    train_set = data_mod.concat(splits.major, splits.minor)
    seed = cfg.seeds[0]
    model, report = poison.train_clean(cfg.arch, train_set, cfg.epochs,
                                       splits.validation_fraction, seed,
                                       batch_size=cfg.batch_size, lr=cfg.lr)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "clean.bdnet"
    save_model(model, ckpt)
    acc = metrics_mod.accuracy(model, splits.test)
    print(f"clean model: test accuracy {acc:.2f}%  best epoch {report.best_epoch}  -> {ckpt}")
    return 0


def cmd_mask_gen_static(args) -> int:
    h, w, c = args.size
    mask = masks_mod.generate_static(h, w, c, args.region, tuple(args.pos), args.intensity)
    masks_mod.save_mask(mask, args.out)
    nz = int(np.count_nonzero(mask.values[:, :, 0]))
    print(f"static mask {h}x{w}x{c} r={args.region} intensity={args.intensity} "
          f"({nz} pixels/channel) -> {args.out}")
    return 0


def cmd_mask_gen_adaptive(args) -> int:
    model = load_model(args.model)
    ds = parse_dataset_ref(args.samples)
    idx = ds.class_indices(args.source_class)
    if len(idx) == 0:
        raise ConfigError(f"dataset has no class-{args.source_class} samples")
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 211]))
    take = rng.permutation(idx)[: args.sample_count]
    params = UniversalParams(
        xi=args.xi, passes=args.passes,
        deepfool=DeepFoolParams(target=args.target, source=args.source_class,
                                max_iter=args.max_iter, overshoot=args.overshoot))
    mask = build_universal_mask(model, ds.images[take].astype(np.float64), params)
    masks_mod.save_mask(mask, args.out)
    print(f"adaptive mask xi={args.xi} class {args.source_class}->{args.target} "
          f"max|v|={mask.max_intensity:.3f} -> {args.out}")
    return 0


def _evaluate_common(args, defense: DefenseSpec | None) -> int:
    model = load_model(args.model)
    ds = parse_dataset_ref(args.data)
    mask = masks_mod.load_mask(args.mask)
    c, t = (int(x) for x in args.pair.split(":"))
    success = metrics_mod.attack_success_rate(model, ds, mask, c, t)
    acc = metrics_mod.accuracy(model, ds)
    print(f"attack success {success:.2f}%  clean accuracy {acc:.2f}%")
    if defense is not None:
        rep = evaluate_defense(model, ds, mask, (c, t), defense)
        print(f"defended ({defense.kind}): success {rep.defended_success:.2f}% "
              f"(drop {rep.success_drop:.2f}), accuracy {rep.defended_accuracy:.2f}% "
              f"(cost {rep.accuracy_cost:.2f})")
    return 0


def cmd_evaluate(args) -> int:
    return _evaluate_common(args, None)


def cmd_defend(args) -> int:
    defense = DefenseSpec(kind=args.kind, noise_range=args.range,
                          kernel_size=args.kernel, seed=args.seed)
    return _evaluate_common(args, defense)


def _add_eval_args(p):
    p.add_argument("--model", required=True, help="model checkpoint (.bdnet)")
    p.add_argument("--mask", required=True, help="perturbation mask (.bdmask)")
    p.add_argument("--data", required=True, help="dataset reference")
    p.add_argument("--pair", required=True, help="source:target classes, e.g. 0:2")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bdnet",
                                 description="backdoor perturbation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run, out_hint=lambda a: a.out)

    p = sub.add_parser("sweep", help="grid of runs along one axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=("injection", "intensity", "xi"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep, out_hint=lambda a: a.out)

    p = sub.add_parser("attack", help="poisoned training run")
    p.add_argument("mode", choices=("bib", "bid"))
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack, out_hint=lambda a: a.out)

    p = sub.add_parser("train-clean", help="train an unpoisoned model")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_clean, out_hint=lambda a: a.out)

    pm = sub.add_parser("mask", help="mask generation")
    msub = pm.add_subparsers(dest="mask_command", required=True)

    p = msub.add_parser("gen-static", help="patterned static mask")
    p.add_argument("--size", nargs=3, type=int, metavar=("H", "W", "C"), required=True)
    p.add_argument("--region", type=int, default=2)
    p.add_argument("--pos", nargs=2, type=int, default=[0, 0], metavar=("I", "J"))
    p.add_argument("--intensity", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_gen_static, out_hint=lambda a: None)

    p = msub.add_parser("gen-adaptive", help="targeted adaptive mask")
    p.add_argument("--model", required=True)
    p.add_argument("--class", dest="source_class", type=int, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--passes", type=int, default=10)
    p.add_argument("--overshoot", type=float, default=0.02)
    p.add_argument("--samples", required=True, help="dataset reference for class-c samples")
    p.add_argument("--sample-count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_gen_adaptive, out_hint=lambda a: None)

    p = sub.add_parser("evaluate", help="metrics for a checkpoint and mask")
    _add_eval_args(p)
    p.set_defaults(func=cmd_evaluate, out_hint=lambda a: None)

    p = sub.add_parser("defend", help="evaluate with a test-time defense")
    _add_eval_args(p)
    p.add_argument("--kind", choices=("noise", "blur"), required=True)
    p.add_argument("--range", type=int, default=20)
    p.add_argument("--kernel", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_defend, out_hint=lambda a: None)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BdnetError, OSError, ValueError) as exc:
        out_hint = getattr(args, "out_hint", lambda a: None)(args)
        _error_record(exc, out_hint)
        return 1


if __name__ == "__main__":
    sys.exit(main())
