"""Injection-set construction, poisoned training, and knowledge scenarios.

BIB trains a fresh model on the shuffled union of clean and injected samples,
keeping the checkpoint with the best validation accuracy.  BID starts from a
pre-trained model and streams fixed-size batches, replacing a few slots per
batch with backdoor samples; metrics are recorded along the stream and the
model at the evaluation horizon is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import masks as masks_mod
from . import zoo
from .data import LabeledDataset, Splits, carve_validation, concat
from .errors import (EmptyBatchError, EmptySourceError, InjectionSpecError,
                     ScenarioError)
from .metrics import accuracy, attack_success_rate
from .nn.model import Model, loss_and_param_gradients
from .nn.optim import adam, optimizer_step

log = logging.getLogger(__name__)

SCENARIOS = ("BIB-PKD", "BIB-MK", "BID-FK", "BID-PKD", "BID-PKM", "BID-MK")

DEFAULT_BATCH_SIZE = 128
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_MAX_EPOCHS = 20
DEFAULT_BID_HORIZON = 250


@dataclass(frozen=True)
class InjectionSpec:
    source: int
    target: int
    mask: masks_mod.PerturbationMask
    count: int = 0       # BIB: total injected samples
    per_batch: int = 0   # BID: injected samples per incoming batch
    batch_size: int = DEFAULT_BATCH_SIZE
    horizon: int = DEFAULT_BID_HORIZON

    def __post_init__(self):
        if self.source == self.target:
            raise InjectionSpecError("source and target class must differ")
        if self.count < 0 or self.per_batch < 0:
            raise InjectionSpecError("injection counts must be non-negative")
        if self.per_batch >= self.batch_size:
            raise InjectionSpecError("per-batch injection must stay below the batch size")
        if self.batch_size <= 0 or self.horizon <= 0:
            raise InjectionSpecError("batch size and horizon must be positive")


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)   # per-epoch dicts
    series: list = field(default_factory=list)   # per-batch dicts (BID)
    best_epoch: int = -1
    best_validation_accuracy: float = 0.0
    injection_ratio: float = 0.0
    injected_total: int = 0


def build_injection_set(pool: LabeledDataset, spec: InjectionSpec, rng_seed: int,
                        count: int | None = None, preprocess=None) -> LabeledDataset:
    """Masked class-c samples drawn from the pool, all labeled t.

    Draws without replacement when the pool suffices, otherwise with
    replacement (logged).  ``preprocess`` optionally maps each masked image
    (e.g. a blur, to pre-empt a blurring defense).
    """
    n = spec.count if count is None else count
    src = pool.class_indices(spec.source)
    if len(src) == 0:
        raise EmptySourceError(f"pool has no class-{spec.source} samples")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 101]))
    if n == 0:
        chosen = np.zeros(0, dtype=np.intp)
    elif n <= len(src):
        chosen = rng.choice(src, size=n, replace=False)
    else:
        log.info("injection request %d exceeds %d class-%d samples; sampling with replacement",
                 n, len(src), spec.source)
        chosen = rng.choice(src, size=n, replace=True)
    images = masks_mod.apply_batch(pool.images[chosen], spec.mask) if n else \
        pool.images[chosen]
    if preprocess is not None and n:
        images = np.stack([preprocess(img) for img in images])
    labels = np.full(n, spec.target, dtype=np.int64)
    return LabeledDataset(images, labels, pool.class_count)


def _train_epochs(model: Model, train_set: LabeledDataset, val_set: LabeledDataset,
                  epochs: int, rng_seed: int, batch_size: int, lr: float):
    """Best-validation-checkpoint epoch training loop."""
    opt = adam(lr)
    report = TrainReport()
    best_params, best_acc, best_epoch = model.params, -1.0, -1
    order_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 23]))
    images, labels = train_set.images, train_set.labels
    step = 0
    for epoch in range(epochs):
        perm = order_rng.permutation(len(images))
        losses = []
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            loss, grads = loss_and_param_gradients(
                model, (images[idx], labels[idx]), rng_seed=np.random.SeedSequence([rng_seed, 31, step]))
            model, opt = optimizer_step(opt, model, grads)
            losses.append(loss)
            step += 1
        val_acc = accuracy(model, val_set) if len(val_set) else 100.0
        report.epochs.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                              "validation_accuracy": val_acc})
        if val_acc >= best_acc:  # ties go to the later, more-trained epoch
            best_acc, best_epoch, best_params = val_acc, epoch, model.params
    report.best_epoch = best_epoch
    report.best_validation_accuracy = best_acc
    return model.with_params(best_params), report


def train_bib(victim_arch: str, train_set: LabeledDataset, injection_set: LabeledDataset,
              epochs: int = DEFAULT_MAX_EPOCHS, validation_fraction: float = 0.2,
              rng_seed: int = 0, *, batch_size: int = DEFAULT_BATCH_SIZE,
              lr: float = DEFAULT_LEARNING_RATE) -> tuple[Model, TrainReport]:
    """Poison-before-training: fit a fresh model on clean-plus-injected data.

    Validation is carved from the clean training data; the injected samples
    join the remaining 80% and the whole pool is reshuffled each epoch.
    Returns the best-validation checkpoint.
    """
    if len(train_set) == 0:
        raise EmptyBatchError("empty training set")
    fit_part, val_part = carve_validation(train_set, validation_fraction, rng_seed)
    pool = concat(fit_part, injection_set) if len(injection_set) else fit_part
    model = zoo.build(victim_arch, train_set.image_shape, train_set.class_count, rng_seed)
    model, report = _train_epochs(model, pool, val_part, epochs, rng_seed, batch_size, lr)
    report.injected_total = len(injection_set)
    report.injection_ratio = len(injection_set) / (len(train_set) + len(injection_set))
    return model, report


def train_clean(victim_arch: str, train_set: LabeledDataset,
                epochs: int = DEFAULT_MAX_EPOCHS, validation_fraction: float = 0.2,
                rng_seed: int = 0, **kw) -> tuple[Model, TrainReport]:
    """Baseline: identical to train_bib with nothing injected."""
    empty = train_set.take([])
    return train_bib(victim_arch, train_set, empty, epochs, validation_fraction,
                     rng_seed, **kw)


def train_bid(pretrained: Model, stream_data: LabeledDataset, injection_pool: LabeledDataset,
              spec: InjectionSpec, rng_seed: int = 0, *,
              lr: float = DEFAULT_LEARNING_RATE, eval_every: int = 25,
              inject_until: int | None = None, test_set: LabeledDataset | None = None,
              preprocess=None) -> tuple[Model, TrainReport]:
    """Poison-during-updating: stream batches into a pre-trained model.

    Each incoming batch has ``spec.per_batch`` randomly chosen slots replaced
    by fresh backdoor samples drawn from the injection pool.  Streaming stops
    at ``spec.horizon`` batches; injection can stop earlier (``inject_until``)
    to observe the backdoor decaying under clean updates.  When ``test_set``
    is given, attack success and test accuracy are recorded every
    ``eval_every`` batches.
    """
    if pretrained.input_shape != stream_data.image_shape:
        raise ScenarioError("pretrained model does not match the stream data shape")
    src = injection_pool.class_indices(spec.source)
    if spec.per_batch > 0 and len(src) == 0:
        raise EmptySourceError(f"injection pool has no class-{spec.source} samples")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 47]))
    model = pretrained
    opt = adam(lr)
    report = TrainReport()
    report.injected_total = 0
    horizon = spec.horizon
    stop_inject = horizon if inject_until is None else inject_until
    batch_index = 0
    images, labels = stream_data.images, stream_data.labels

    def _record(b):
        if test_set is None:
            return
        report.series.append({
            "batch": b,
            "test_accuracy": accuracy(model, test_set),
            "attack_success": attack_success_rate(
                model, test_set, spec.mask, spec.source, spec.target),
        })

    while batch_index < horizon:
        perm = rng.permutation(len(images))
        for start in range(0, len(perm), spec.batch_size):
            if batch_index >= horizon:
                break
            idx = perm[start : start + spec.batch_size]
            bx = images[idx].copy()
            by = labels[idx].copy()
            k = spec.per_batch if batch_index < stop_inject else 0
            k = min(k, max(len(bx) - 1, 0))  # runt batches keep a clean slot
            if k > 0:
                slots = rng.choice(len(bx), size=k, replace=False)
                picks = rng.choice(src, size=k, replace=len(src) < k)
                injected = masks_mod.apply_batch(injection_pool.images[picks], spec.mask)
                if preprocess is not None:
                    injected = np.stack([preprocess(img) for img in injected])
                bx[slots] = injected
                by[slots] = spec.target
                report.injected_total += k
            loss, grads = loss_and_param_gradients(
                model, (bx, by), rng_seed=np.random.SeedSequence([rng_seed, 53, batch_index]))
            model, opt = optimizer_step(opt, model, grads)
            batch_index += 1
            if eval_every and batch_index % eval_every == 0:
                _record(batch_index)
    if not report.series or report.series[-1]["batch"] != batch_index:
        _record(batch_index)
    report.injection_ratio = report.injected_total / (horizon * spec.batch_size)
    return model, report


# ---------------------------------------------------------------------------
# knowledge scenarios


@dataclass
class ResolvedScenario:
    name: str
    victim_train: LabeledDataset          # BIB: D_T; BID: the update stream
    injection_pool: LabeledDataset
    pretrain_data: LabeledDataset | None  # BID only: data behind M_pre
    pretrained: Model | None              # BID only: M_pre
    mask_model: Model | None              # model behind adaptive masks


def _halve(ds: LabeledDataset, seed: int):
    first, second = carve_validation(ds, 0.5, seed + 71)
    return first, second


def resolve_scenario(name: str, splits: Splits, rng_seed: int, *,
                     victim_arch: str, surrogate_arch: str = "lenet5-gtsrb",
                     need_mask_model: bool = True, epochs: int = DEFAULT_MAX_EPOCHS,
                     batch_size: int = DEFAULT_BATCH_SIZE,
                     lr: float = DEFAULT_LEARNING_RATE) -> ResolvedScenario:
    """Map a knowledge scenario onto concrete datasets and helper models.

    BIB scenarios train a surrogate for mask generation (on D_T for PKD, on
    the minor set for MK).  BID scenarios pre-train the victim on half of its
    training data and stream the other half; the mask model is that
    pre-trained model when the adversary knows it (FK/PKM) and a surrogate
    otherwise.  Pass ``need_mask_model=False`` to skip that work for
    static-mask runs.
    """
    if name not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    major, minor = splits.major, splits.minor
    if len(major) == 0:
        raise ScenarioError("scenario needs a non-empty major split")
    vf = splits.validation_fraction

    def _fit_surrogate(data):
        m, _ = train_clean(surrogate_arch, data, epochs, vf, rng_seed + 13,
                           batch_size=batch_size, lr=lr)
        return m

    def _fit_pretrained(data):
        m, _ = train_clean(victim_arch, data, epochs, vf, rng_seed + 17,
                           batch_size=batch_size, lr=lr)
        return m

    if name == "BIB-PKD":
        d_t = concat(major, minor)
        mask_model = _fit_surrogate(d_t) if need_mask_model else None
        return ResolvedScenario(name, d_t, d_t, None, None, mask_model)
    if name == "BIB-MK":
        if len(minor) == 0:
            raise ScenarioError("BIB-MK needs a non-empty minor split")
        mask_model = _fit_surrogate(minor) if need_mask_model else None
        return ResolvedScenario(name, major, minor, None, None, mask_model)

    # BID family: halve the scenario's training data into pre-train / update
    if name in ("BID-FK", "BID-PKD"):
        d_t = concat(major, minor)
        pool_from_minor = False
    else:  # BID-PKM, BID-MK
        d_t = major
        pool_from_minor = True
        if len(minor) == 0:
            raise ScenarioError(f"{name} needs a non-empty minor split")
    pre_half, update_half = _halve(d_t, rng_seed)
    pretrained = _fit_pretrained(pre_half)
    pool = minor if pool_from_minor else pre_half
    if not need_mask_model:
        mask_model = None
    elif name in ("BID-FK", "BID-PKM"):
        mask_model = pretrained
    else:
        mask_model = _fit_surrogate(pre_half if name == "BID-PKD" else minor)
    return ResolvedScenario(name, update_half, pool, pre_half, pretrained, mask_model)
