"""Flat dotted-key run configuration.

Config files are ``key = value`` lines (``#`` comments).  Every key is listed
in KNOWN_KEYS; unknown keys are rejected so typos fail loudly.  Seeds are
mandatory: runs never fall back to wall-clock seeding.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .data import SplitPlan
from .defenses import DefenseSpec
from .errors import ConfigError

OUTPUT_ROOT_ENV = "BDNET_OUT"

KNOWN_KEYS = {
    "dataset.kind", "dataset.classes", "dataset.per_class", "dataset.size",
    "dataset.channels", "dataset.seed", "dataset.images", "dataset.labels",
    "dataset.test_images", "dataset.test_labels", "dataset.subset", "dataset.augment",
    "split.major", "split.minor", "split.test", "split.validation",
    "scenario", "arch", "surrogate",
    "mask.kind", "mask.intensity", "mask.region", "mask.pos", "mask.xi",
    "mask.samples", "mask.passes", "mask.max_iter", "mask.overshoot",
    "pairs",
    "inject.count", "inject.per_batch", "inject.until",
    "train.epochs", "train.batch", "train.lr",
    "bid.horizon", "bid.eval_every",
    "defense.kind", "defense.range", "defense.kernel", "defense.seed",
    "stealth.sample", "stealth.fraction",
    "seeds", "out",
    "save.checkpoints", "save.masks",
    "sweep.axis", "sweep.values",
}

SWEEP_AXES = ("injection", "intensity", "xi")


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    return values


def _to_int(values, key, default):
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError as e:
        raise ConfigError(f"{key}: expected integer, got {values[key]!r}") from e


def _to_float(values, key, default):
    if key not in values:
        return default
    try:
        return float(values[key])
    except ValueError as e:
        raise ConfigError(f"{key}: expected number, got {values[key]!r}") from e


def _to_bool(values, key, default):
    if key not in values:
        return default
    v = values[key].lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {values[key]!r}")


def _parse_pairs(text: str):
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            c, t = item.split(":")
            pair = (int(c), int(t))
        except ValueError as e:
            raise ConfigError(f"pairs: expected 'c:t' items, got {item!r}") from e
        if pair[0] == pair[1]:
            raise ConfigError(f"pairs: source equals target in {item!r}")
        pairs.append(pair)
    if not pairs:
        raise ConfigError("pairs: at least one c:t pair required")
    return pairs


def _parse_num_list(text: str, key: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(float(item) if "." in item else int(item))
        except ValueError as e:
            raise ConfigError(f"{key}: bad number {item!r}") from e
    return out


@dataclass
class RunConfig:
    dataset_kind: str
    classes: int
    per_class: int
    size: int
    channels: int
    dataset_seed: int
    idx_images: str | None
    idx_labels: str | None
    idx_test_images: str | None
    idx_test_labels: str | None
    subset: int
    augment_factor: int
    plan: SplitPlan
    scenario: str
    arch: str
    surrogate: str
    mask_kind: str
    intensity: float
    region: int
    position: tuple[int, int]
    xi: float
    mask_samples: int
    passes: int
    max_iter: int
    overshoot: float
    pairs: list
    inject_count: int
    inject_per_batch: int
    inject_until: int
    epochs: int
    batch_size: int
    lr: float
    horizon: int
    eval_every: int
    defense: DefenseSpec | None
    stealth_sample: int
    stealth_fraction: float
    seeds: list
    out: str
    save_checkpoints: bool
    save_masks: bool
    sweep_axis: str | None
    sweep_values: list = field(default_factory=list)
    raw_text: str = ""


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return config_from_text(text)


def config_from_text(text: str) -> RunConfig:
    v = parse_config_text(text)

    if "seeds" not in v:
        raise ConfigError("seeds is mandatory (comma-separated integers)")
    seeds = [int(s) for s in _parse_num_list(v["seeds"], "seeds")]

    dataset_kind = v.get("dataset.kind", "synthetic")
    if dataset_kind not in ("synthetic", "digits", "idx"):
        raise ConfigError(f"dataset.kind must be synthetic/digits/idx, got {dataset_kind!r}")
    if dataset_kind == "idx" and ("dataset.images" not in v or "dataset.labels" not in v):
        raise ConfigError("idx datasets need dataset.images and dataset.labels")

    try:
        plan = SplitPlan(
            major=_to_float(v, "split.major", 0.854),
            minor=_to_float(v, "split.minor", 0.095),
            test=_to_float(v, "split.test", 0.051),
            validation=_to_float(v, "split.validation", 0.2),
            seed=_to_int(v, "dataset.seed", 0),
        )
    except Exception as e:
        raise ConfigError(f"split plan: {e}") from e

    mask_kind = v.get("mask.kind", "static")
    if mask_kind not in ("static", "adaptive"):
        raise ConfigError(f"mask.kind must be static or adaptive, got {mask_kind!r}")

    pos_text = v.get("mask.pos", "0,0")
    pos_items = [p.strip() for p in pos_text.split(",")]
    if len(pos_items) != 2:
        raise ConfigError(f"mask.pos: expected 'i,j', got {pos_text!r}")
    position = (int(pos_items[0]), int(pos_items[1]))

    defense = None
    if v.get("defense.kind", "none") != "none":
        defense = DefenseSpec(
            kind=v["defense.kind"],
            noise_range=_to_int(v, "defense.range", 20),
            kernel_size=_to_int(v, "defense.kernel", 5),
            seed=_to_int(v, "defense.seed", 0),
        )

    sweep_axis = v.get("sweep.axis")
    if sweep_axis is not None and sweep_axis not in SWEEP_AXES:
        raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}, got {sweep_axis!r}")
    sweep_values = _parse_num_list(v["sweep.values"], "sweep.values") if "sweep.values" in v else []

    out = os.environ.get(OUTPUT_ROOT_ENV) or v.get("out", "runs/run")

    return RunConfig(
        dataset_kind=dataset_kind,
        classes=_to_int(v, "dataset.classes", 8),
        per_class=_to_int(v, "dataset.per_class", 300),
        size=_to_int(v, "dataset.size", 32),
        channels=_to_int(v, "dataset.channels", 3),
        dataset_seed=_to_int(v, "dataset.seed", 0),
        idx_images=v.get("dataset.images"),
        idx_labels=v.get("dataset.labels"),
        idx_test_images=v.get("dataset.test_images"),
        idx_test_labels=v.get("dataset.test_labels"),
        subset=_to_int(v, "dataset.subset", 0),
        augment_factor=_to_int(v, "dataset.augment", 0),
        plan=plan,
        scenario=v.get("scenario", "BIB-PKD"),
        arch=v.get("arch", "tiny-synthetic"),
        surrogate=v.get("surrogate", "tiny-synthetic-sg"),
        mask_kind=mask_kind,
        intensity=_to_float(v, "mask.intensity", 10.0),
        region=_to_int(v, "mask.region", 2),
        position=position,
        xi=_to_float(v, "mask.xi", 10.0),
        mask_samples=_to_int(v, "mask.samples", 100),
        passes=_to_int(v, "mask.passes", 10),
        max_iter=_to_int(v, "mask.max_iter", 50),
        overshoot=_to_float(v, "mask.overshoot", 0.02),
        pairs=_parse_pairs(v.get("pairs", "0:1")),
        inject_count=_to_int(v, "inject.count", 0),
        inject_per_batch=_to_int(v, "inject.per_batch", 0),
        inject_until=_to_int(v, "inject.until", 0),
        epochs=_to_int(v, "train.epochs", 20),
        batch_size=_to_int(v, "train.batch", 128),
        lr=_to_float(v, "train.lr", 1e-3),
        horizon=_to_int(v, "bid.horizon", 250),
        eval_every=_to_int(v, "bid.eval_every", 25),
        defense=defense,
        stealth_sample=_to_int(v, "stealth.sample", 100),
        stealth_fraction=_to_float(v, "stealth.fraction", 0.25),
        seeds=[int(s) for s in seeds],
        out=out,
        save_checkpoints=_to_bool(v, "save.checkpoints", True),
        save_masks=_to_bool(v, "save.masks", True),
        sweep_axis=sweep_axis,
        sweep_values=sweep_values,
        raw_text=text,
    )
