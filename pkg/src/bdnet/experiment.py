"""End-to-end experiment driver: split, mask, resolve, train, evaluate, persist.

A run executes its scenario for every (seed, pair) combination, reusing the
per-seed clean baseline and helper models across pairs, then writes per-pair
CSV rows plus one averaged row, a JSONL report stream, and the generated
masks and checkpoints.  Everything is derived from the config's seeds, so a
rerun reproduces the outputs byte for byte.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import masks as masks_mod
from . import metrics as metrics_mod
from . import poison
from .adaptive import DeepFoolParams, UniversalParams, build_universal_mask
from .config import RunConfig
from .defenses import evaluate_defense
from .errors import ConfigError, ScenarioError
from .metrics import ExperimentReport, StealthBlock
from .nn.checkpoint import save_model

log = logging.getLogger(__name__)

FORMAT_VERSIONS = "checkpoint=BDNET1 mask=BDMASK1 csv=" + ",".join(metrics_mod.CSV_COLUMNS)


def prepare_dataset(cfg: RunConfig):
    """Build the experiment pool (and a fixed test set for idx pairs)."""
    fixed_test = None
    if cfg.dataset_kind == "synthetic":
        pool = data_mod.generate_synthetic(cfg.classes, cfg.per_class, cfg.size,
                                           cfg.channels, cfg.dataset_seed)
    elif cfg.dataset_kind == "digits":
        pool = data_mod.generate_digits(cfg.per_class, cfg.size, cfg.dataset_seed)
    else:
        pool = data_mod.load_idx(cfg.idx_images, cfg.idx_labels)
        if cfg.idx_test_images:
            fixed_test = data_mod.load_idx(cfg.idx_test_images, cfg.idx_test_labels)
    if cfg.subset:
        pool = data_mod.stratified_subset(pool, cfg.subset, cfg.dataset_seed)
    if cfg.augment_factor:
        pool = data_mod.augment(pool, cfg.augment_factor, cfg.dataset_seed)
    return pool, fixed_test


def make_splits(cfg: RunConfig, pool, fixed_test):
    if fixed_test is None:
        return data_mod.split(pool, cfg.plan)
    # fixed test file: renormalize major/minor over the training pool
    mm = cfg.plan.major + cfg.plan.minor
    plan = data_mod.SplitPlan(major=cfg.plan.major / mm, minor=cfg.plan.minor / mm,
                              test=0.0, validation=cfg.plan.validation, seed=cfg.plan.seed)
    s = data_mod.split(pool, plan)
    return data_mod.Splits(s.major, s.minor, fixed_test, cfg.plan.validation)


class _Runner:
    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.pool, fixed_test = prepare_dataset(cfg)
        self.splits = make_splits(cfg, self.pool, fixed_test)
        self._resolved = {}
        self._bib_baseline = {}
        self._static_mask = None

    # -- cached helpers ----------------------------------------------------
    def resolved(self, seed: int) -> poison.ResolvedScenario:
        key = seed
        if key not in self._resolved:
            self._resolved[key] = poison.resolve_scenario(
                self.cfg.scenario, self.splits, seed,
                victim_arch=self.cfg.arch, surrogate_arch=self.cfg.surrogate,
                need_mask_model=self.cfg.mask_kind == "adaptive",
                epochs=self.cfg.epochs, batch_size=self.cfg.batch_size, lr=self.cfg.lr)
        return self._resolved[key]

    def bib_baseline(self, seed: int, train_set):
        if seed not in self._bib_baseline:
            model, _ = poison.train_clean(
                self.cfg.arch, train_set, self.cfg.epochs,
                self.splits.validation_fraction, seed,
                batch_size=self.cfg.batch_size, lr=self.cfg.lr)
            self._bib_baseline[seed] = model
        return self._bib_baseline[seed]

    def build_mask(self, seed: int, pair, resolved) -> masks_mod.PerturbationMask:
        cfg = self.cfg
        h, w, c = self.splits.test.image_shape
        if cfg.mask_kind == "static":
            if self._static_mask is None:
                self._static_mask = masks_mod.generate_static(
                    h, w, c, cfg.region, cfg.position, cfg.intensity)
            return self._static_mask
        src, tgt = pair
        pool = resolved.injection_pool
        idx = pool.class_indices(src)
        if len(idx) == 0:
            raise ScenarioError(f"injection pool lacks class-{src} samples for the mask")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 211, src, tgt]))
        take = rng.permutation(idx)[: cfg.mask_samples]
        samples = pool.images[take].astype(np.float64)
        params = UniversalParams(
            xi=cfg.xi, passes=cfg.passes,
            deepfool=DeepFoolParams(target=tgt, source=src, max_iter=cfg.max_iter,
                                    overshoot=cfg.overshoot))
        return build_universal_mask(resolved.mask_model, samples, params)

    def stealth_block(self, mask, pair) -> StealthBlock | None:
        cfg = self.cfg
        if cfg.stealth_sample <= 0:
            return None
        src = pair[0]
        idx = self.splits.test.class_indices(src)[: cfg.stealth_sample]
        if len(idx) == 0:
            return None
        originals = self.splits.test.images[idx]
        perturbed = masks_mod.apply_batch(originals, mask)
        sims = [metrics_mod.phash_similarity(o, p) for o, p in zip(originals, perturbed)]
        hf_mean, hf_std = metrics_mod.high_freq_stats(list(perturbed), cfg.stealth_fraction)
        m_mean, m_std = metrics_mod.high_freq_stats([mask.values], cfg.stealth_fraction)
        return StealthBlock(phash_sim=float(np.mean(sims)), hf_mean=hf_mean, hf_stdev=hf_std,
                            mask_hf_mean=m_mean, mask_hf_stdev=m_std)

    # -- one (seed, pair) cell ----------------------------------------------
    def run_cell(self, seed: int, pair) -> ExperimentReport:
        cfg = self.cfg
        resolved = self.resolved(seed)
        mask = self.build_mask(seed, pair, resolved)
        src, tgt = pair
        test = self.splits.test
        is_bib = cfg.scenario.startswith("BIB")
        spec = poison.InjectionSpec(
            source=src, target=tgt, mask=mask,
            count=cfg.inject_count, per_batch=cfg.inject_per_batch,
            batch_size=cfg.batch_size, horizon=cfg.horizon)
        if is_bib:
            injection = poison.build_injection_set(resolved.injection_pool, spec, seed)
            victim, train_report = poison.train_bib(
                cfg.arch, resolved.victim_train, injection, cfg.epochs,
                self.splits.validation_fraction, seed,
                batch_size=cfg.batch_size, lr=cfg.lr)
            baseline_model = self.bib_baseline(seed, resolved.victim_train)
            injected = cfg.inject_count
        else:
            victim, train_report = poison.train_bid(
                resolved.pretrained, resolved.victim_train, resolved.injection_pool,
                spec, seed, lr=cfg.lr, eval_every=cfg.eval_every,
                inject_until=cfg.inject_until or None, test_set=test)
            baseline_model = resolved.pretrained
            injected = cfg.inject_per_batch
        success = metrics_mod.attack_success_rate(victim, test, mask, src, tgt)
        acc = metrics_mod.accuracy(victim, test)
        base_acc = metrics_mod.accuracy(baseline_model, test)
        report = ExperimentReport(
            scenario=cfg.scenario, mask_kind=cfg.mask_kind,
            intensity=cfg.intensity if cfg.mask_kind == "static" else cfg.xi,
            pair=pair, injection=injected, success_rate=success, accuracy=acc,
            baseline_accuracy=base_acc,
            accuracy_loss=metrics_mod.accuracy_loss(base_acc, acc), seed=seed,
            stealth=self.stealth_block(mask, pair),
            series=train_report.series or train_report.epochs,
            extra={"injection_ratio": train_report.injection_ratio,
                   "best_epoch": train_report.best_epoch})
        if cfg.defense is not None:
            d = evaluate_defense(victim, test, mask, pair, cfg.defense)
            report.extra["defense"] = {
                "kind": cfg.defense.kind,
                "defended_success": d.defended_success,
                "defended_accuracy": d.defended_accuracy,
                "success_drop": d.success_drop,
                "accuracy_cost": d.accuracy_cost,
            }
        self._persist_cell(seed, pair, mask, victim)
        return report

    def _persist_cell(self, seed, pair, mask, victim):
        if self.cfg.save_masks:
            mdir = self.out / "masks"
            mdir.mkdir(parents=True, exist_ok=True)
            masks_mod.save_mask(mask, mdir / f"mask_{pair[0]}-{pair[1]}_s{seed}.bdmask")
        if self.cfg.save_checkpoints:
            cdir = self.out / "checkpoints"
            cdir.mkdir(parents=True, exist_ok=True)
            save_model(victim, cdir / f"victim_{pair[0]}-{pair[1]}_s{seed}.bdnet")


def run_experiment(cfg: RunConfig, out_dir=None) -> list[ExperimentReport]:
    """Execute every (seed, pair) cell and write the run directory."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(
        f"# bdnet run\n# formats: {FORMAT_VERSIONS}\n" + cfg.raw_text, encoding="utf-8")
    runner = _Runner(cfg, out)
    reports = []
    for seed in cfg.seeds:
        for pair in cfg.pairs:
            log.info("running %s seed=%d pair=%s", cfg.scenario, seed, pair)
            reports.append(runner.run_cell(seed, pair))
    rows = [r.csv_row() for r in reports]
    rows.append(metrics_mod.averaged_row(reports))
    metrics_mod.write_csv(out / "summary.csv", rows)
    metrics_mod.write_jsonl(out / "reports.jsonl", reports)
    return reports


_AXIS_FIELD = {"injection": None, "intensity": "intensity", "xi": "xi"}


def run_sweep(cfg: RunConfig, axis: str, out_dir=None) -> list[list[ExperimentReport]]:
    """One run per axis value with shared seeds; consolidated sweep.csv."""
    if axis not in _AXIS_FIELD:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    values = cfg.sweep_values
    if not values:
        raise ConfigError("sweep.values must list at least one value")
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    all_rows, grids = [], []
    for value in values:
        if axis == "injection":
            if cfg.scenario.startswith("BIB"):
                sub = dataclasses.replace(cfg, inject_count=int(value))
            else:
                sub = dataclasses.replace(cfg, inject_per_batch=int(value))
        elif axis == "intensity":
            sub = dataclasses.replace(cfg, intensity=float(value))
        else:
            sub = dataclasses.replace(cfg, xi=float(value))
        sub_dir = out / f"{axis}={value:g}" if isinstance(value, float) else out / f"{axis}={value}"
        reports = run_experiment(sub, sub_dir)
        grids.append(reports)
        all_rows.extend(r.csv_row() for r in reports)
        all_rows.append(metrics_mod.averaged_row(reports))
    metrics_mod.write_csv(out / "sweep.csv", all_rows)
    return grids
