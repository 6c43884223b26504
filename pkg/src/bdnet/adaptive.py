"""Targeted boundary-crossing perturbations and universal mask construction.

``targeted_deepfool`` walks a single input toward the target class along the
linearized decision boundary between the source and target logits.
``build_universal_mask`` accumulates such steps over a set of source-class
samples, re-projecting onto the l-infinity ball after every update, which
yields one mask that pushes the whole class toward the target boundary.
Everything operates in raw 0-255 pixel units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGradientError, EmptyInputError
from .masks import ADAPTIVE, PerturbationMask
from .nn.model import Model, forward, logit_margin_and_input_gradient

log = logging.getLogger(__name__)

_GRAD_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class DeepFoolParams:
    target: int
    source: int
    max_iter: int = 50
    overshoot: float = 0.02

    def __post_init__(self):
        if self.target == self.source:
            raise ValueError("target class must differ from source class")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.overshoot < 0:
            raise ValueError("overshoot must be non-negative")


@dataclass(frozen=True)
class UniversalParams:
    xi: float
    passes: int = 10
    deepfool: DeepFoolParams = field(default=None)  # required

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if self.deepfool is None:
            raise ValueError("deepfool parameters required")


def project_linf(v, xi: float) -> np.ndarray:
    """Nearest point of the l-infinity ball of radius xi: element-wise clamp."""
    if xi < 0:
        raise ValueError("xi must be non-negative")
    return np.clip(np.asarray(v), -xi, xi)


def _predicted(model: Model, x) -> int:
    logits, _ = forward(model, x)
    return int(logits.argmax())


def targeted_deepfool(model: Model, x, params: DeepFoolParams) -> np.ndarray:
    """Minimal accumulated perturbation sending ``x`` toward the target class.

    Per iteration: w = grad of target logit minus grad of source logit,
    f = target logit minus source logit, step = (|f| / ||w||^2) * w.  Stops
    when the overshoot-scaled point reaches the target class or the
    iteration budget runs out; returns the perturbation scaled by
    (1 + overshoot).
    """
    t, c = params.target, params.source
    x0 = np.asarray(x, dtype=np.float64)
    v = np.zeros_like(x0)
    if _predicted(model, x0) == t:
        return v
    boost = 1.0 + params.overshoot
    for _ in range(params.max_iter):
        f, w, _ = logit_margin_and_input_gradient(model, x0 + v, t, c)
        w = w.astype(np.float64)
        w_norm_sq = float((w * w).sum())
        if w_norm_sq < _GRAD_NORM_FLOOR ** 2:
            raise DegenerateGradientError(
                f"gradient norm {np.sqrt(w_norm_sq):.3e} below {_GRAD_NORM_FLOOR}")
        v = v + (abs(f) / w_norm_sq) * w
        if _predicted(model, x0 + boost * v) == t:
            break
    return boost * v


def build_universal_mask(model: Model, samples, params: UniversalParams) -> PerturbationMask:
    """One mask for a whole source class, built by repeated boundary steps.

    Iterates over the samples for up to ``params.passes`` passes; any sample
    not yet classified as the target under the current mask contributes a
    fresh perturbation, after which the mask is re-projected onto the
    l-infinity ball of radius xi.  Samples with degenerate gradients are
    skipped and counted.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 3:
        samples = samples[None]
    if len(samples) == 0:
        raise EmptyInputError("no samples to build a universal mask from")
    t = params.deepfool.target
    v = np.zeros(samples.shape[1:], dtype=np.float64)
    skipped = 0
    for _ in range(params.passes):
        updated = False
        for x in samples:
            if _predicted(model, x + v) == t:
                continue
            try:
                dv = targeted_deepfool(model, x + v, params.deepfool)
            except DegenerateGradientError:
                skipped += 1
                continue
            v = project_linf(v + dv, params.xi)
            updated = True
        if not updated:
            break
    if skipped:
        log.warning("universal mask: skipped %d degenerate samples", skipped)
    values = v.astype(np.float32)
    return PerturbationMask(
        values, ADAPTIVE, float(np.abs(values).max()) if values.size else 0.0,
        params={"xi": params.xi, "target": t, "source": params.deepfool.source,
                "passes": params.passes, "max_iter": params.deepfool.max_iter,
                "overshoot": params.deepfool.overshoot, "samples": int(len(samples)),
                "skipped": skipped})
