"""Test-time countermeasures: uniform pixel noise and Gaussian blurring.

Both perturb the *incoming* image, aiming to break a backdoor pattern before
the classifier sees it.  ``evaluate_defense`` reports how much each costs in
clean accuracy versus how much attack success it removes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import masks as masks_mod
from .data import LabeledDataset
from .errors import EmptyEvaluationError
from .imageops import convolve_replicate, gaussian_kernel2d
from .metrics import accuracy, attack_success_rate
from .nn.model import Model, predict

NOISE = "noise"
BLUR = "blur"
NONE = "none"


def default_sigma(kernel_size: int) -> float:
    """Conventional sigma-from-kernel rule: 0.3*((k-1)/2 - 1) + 0.8."""
    return 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8


@dataclass(frozen=True)
class DefenseSpec:
    kind: str = NONE
    noise_range: int = 20           # uniform integer noise in [-a, a]
    kernel_size: int = 5
    sigma: float | None = None      # None: derived from kernel_size
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (NOISE, BLUR, NONE):
            raise ValueError(f"unknown defense kind {self.kind!r}")
        if self.noise_range < 0:
            raise ValueError("noise range must be non-negative")
        if self.kind == BLUR and (self.kernel_size % 2 == 0 or self.kernel_size < 3):
            raise ValueError("blur kernel size must be odd and >= 3")

    def kernel(self) -> np.ndarray:
        sigma = self.sigma if self.sigma is not None else default_sigma(self.kernel_size)
        return gaussian_kernel2d(self.kernel_size, sigma)


def defend(image, spec: DefenseSpec, rng=None) -> np.ndarray:
    """Apply one defense to an 8-bit image; output stays 8-bit in [0, 255]."""
    img = np.asarray(image)
    if spec.kind == NONE:
        return img.copy()
    if spec.kind == NOISE:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
        a = spec.noise_range
        noise = rng.integers(-a, a + 1, size=img.shape).astype(np.int64) if a else 0
        return np.clip(img.astype(np.int64) + noise, 0, 255).astype(np.uint8)
    blurred = convolve_replicate(img.astype(np.float64), spec.kernel())
    return np.clip(np.rint(blurred), 0, 255).astype(np.uint8)


def _defend_batch(images, spec: DefenseSpec, rng):
    return np.stack([defend(img, spec, rng) for img in images])


@dataclass
class DefenseReport:
    defended_success: float
    defended_accuracy: float
    undefended_success: float
    undefended_accuracy: float

    @property
    def success_drop(self) -> float:
        return self.undefended_success - self.defended_success

    @property
    def accuracy_cost(self) -> float:
        return self.undefended_accuracy - self.defended_accuracy


def evaluate_defense(model: Model, test_set: LabeledDataset,
                     mask: masks_mod.PerturbationMask, pair, spec: DefenseSpec) -> DefenseReport:
    """Attack success and clean accuracy with the defense in front of the model.

    The defense runs after the mask on backdoor inputs and directly on clean
    inputs; deltas are reported against the undefended run.
    """
    c, t = pair
    idx = test_set.class_indices(c)
    if len(idx) == 0:
        raise EmptyEvaluationError(f"test set has no class-{c} items")
    undefended_success = attack_success_rate(model, test_set, mask, c, t)
    undefended_accuracy = accuracy(model, test_set)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 3]))
    masked = masks_mod.apply_batch(test_set.images[idx], mask)
    preds = predict(model, _defend_batch(masked, spec, rng))
    defended_success = 100.0 * int((preds == t).sum()) / len(idx)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 5]))
    clean_preds = predict(model, _defend_batch(test_set.images, spec, rng))
    defended_accuracy = 100.0 * int((clean_preds == test_set.labels).sum()) / len(test_set)
    return DefenseReport(defended_success, defended_accuracy,
                         undefended_success, undefended_accuracy)


def class_histogram(dataset: LabeledDataset) -> np.ndarray:
    """Exact per-class counts (a minimal statistical-prior check)."""
    if len(dataset) == 0:
        raise EmptyEvaluationError("empty dataset")
    return np.bincount(dataset.labels, minlength=dataset.class_count)
