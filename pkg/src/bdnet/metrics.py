"""Attack metrics, perceptual-hash and spectral stealth measures, run reports.

Success and accuracy are exact integer counts rendered as percentages.  The
64-bit perceptual hash pipeline is pinned: luminance, bilinear resize to
32x32, orthonormal 2-D DCT-II, top-left 8x8 block, threshold at the median of
the 63 non-DC coefficients.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import masks as masks_mod
from .data import LabeledDataset
from .errors import EmptyEvaluationError, EmptyInputError
from .imageops import bilinear_resize, to_grayscale
from .nn.model import Model, predict

HASH_BITS = 64
DEFAULT_LOW_FREQ_FRACTION = 0.25

CSV_COLUMNS = ["scenario", "mask_kind", "c_m_or_xi", "pair", "injection",
               "success_rate", "accuracy_loss", "phash_sim", "hf_mean", "hf_stdev", "seed"]


# ---------------------------------------------------------------------------
# attack efficacy


def accuracy(model: Model, dataset: LabeledDataset) -> float:
    """Top-1 accuracy in percent."""
    if len(dataset) == 0:
        raise EmptyEvaluationError("empty evaluation set")
    preds = predict(model, dataset.images)
    return 100.0 * int((preds == dataset.labels).sum()) / len(dataset)


def accuracy_loss(baseline: float, poisoned: float) -> float:
    """Baseline minus poisoned accuracy; positive means degradation."""
    return baseline - poisoned


def attack_success_rate(model: Model, test_set: LabeledDataset,
                        mask: masks_mod.PerturbationMask, c: int, t: int) -> float:
    """Percent of masked class-c test images classified as t."""
    idx = test_set.class_indices(c)
    if len(idx) == 0:
        raise EmptyEvaluationError(f"test set has no class-{c} items")
    perturbed = masks_mod.apply_batch(test_set.images[idx], mask)
    preds = predict(model, perturbed)
    return 100.0 * int((preds == t).sum()) / len(idx)


# ---------------------------------------------------------------------------
# perceptual hash


def _dct_matrix(n: int) -> np.ndarray:
    x = np.arange(n)
    m = np.cos(np.pi * (2 * x[None, :] + 1) * x[:, None] / (2 * n))
    m[0] *= math.sqrt(1.0 / n)
    m[1:] *= math.sqrt(2.0 / n)
    return m


_DCT32 = _dct_matrix(32)


def phash64(image) -> int:
    """64-bit perceptual fingerprint of an image."""
    plane = bilinear_resize(to_grayscale(image), 32, 32)
    coeffs = _DCT32 @ plane @ _DCT32.T
    block = coeffs[:8, :8]
    med = np.median(block.ravel()[1:])
    bits = (block > med).ravel()
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def hamming64(a: int, b: int) -> int:
    return bin((a ^ b) & (2 ** HASH_BITS - 1)).count("1")


def phash_similarity(a, b) -> float:
    """(1 - hamming/64) * 100 between two images or two precomputed hashes."""
    ha = a if isinstance(a, int) else phash64(a)
    hb = b if isinstance(b, int) else phash64(b)
    return (1.0 - hamming64(ha, hb) / HASH_BITS) * 100.0


# ---------------------------------------------------------------------------
# frequency-domain stealth


def high_freq_stats(images, low_freq_fraction: float = DEFAULT_LOW_FREQ_FRACTION):
    """Mean and stdev of the high-frequency spectral energy over a list.

    Per item: center-shifted 2-D DFT of the luminance plane, the central
    square of side ceil(fraction * min(h, w)) zeroed, then the L2 norm of the
    remaining magnitudes.  Also usable on masks directly.
    """
    if not 0 < low_freq_fraction < 1:
        raise ValueError("low_freq_fraction must be in (0, 1)")
    items = list(images)
    if not items:
        raise EmptyInputError("high_freq_stats needs at least one image")
    norms = []
    for item in items:
        plane = to_grayscale(item)
        h, w = plane.shape
        spectrum = np.fft.fftshift(np.fft.fft2(plane))
        side = math.ceil(low_freq_fraction * min(h, w))
        top, left = (h - side) // 2, (w - side) // 2
        mag = np.abs(spectrum)
        mag[top : top + side, left : left + side] = 0.0
        norms.append(float(np.sqrt((mag ** 2).sum())))
    arr = np.array(norms)
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# reports


@dataclass
class StealthBlock:
    phash_sim: float
    hf_mean: float
    hf_stdev: float
    mask_hf_mean: float = 0.0
    mask_hf_stdev: float = 0.0


@dataclass
class ExperimentReport:
    scenario: str
    mask_kind: str
    intensity: float  # max intensity change or l-infinity budget
    pair: tuple[int, int]
    injection: int
    success_rate: float
    accuracy: float
    baseline_accuracy: float
    accuracy_loss: float
    seed: int
    stealth: StealthBlock | None = None
    series: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("success_rate", "accuracy", "baseline_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name}={v} outside [0, 100]")

    def to_json(self) -> str:
        d = asdict(self)
        d["pair"] = list(self.pair)
        return json.dumps(d, sort_keys=True)

    def csv_row(self) -> dict:
        s = self.stealth
        return {
            "scenario": self.scenario,
            "mask_kind": self.mask_kind,
            "c_m_or_xi": _fmt(self.intensity),
            "pair": f"{self.pair[0]}->{self.pair[1]}",
            "injection": str(self.injection),
            "success_rate": _fmt(self.success_rate),
            "accuracy_loss": _fmt(self.accuracy_loss),
            "phash_sim": _fmt(s.phash_sim) if s else "",
            "hf_mean": _fmt(s.hf_mean) if s else "",
            "hf_stdev": _fmt(s.hf_stdev) if s else "",
            "seed": str(self.seed),
        }


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def averaged_row(reports: list[ExperimentReport]) -> dict:
    """Mean of the numeric columns over per-pair reports."""
    if not reports:
        raise EmptyInputError("nothing to average")
    mean = lambda xs: sum(xs) / len(xs)
    with_stealth = [r for r in reports if r.stealth]
    return {
        "scenario": reports[0].scenario,
        "mask_kind": reports[0].mask_kind,
        "c_m_or_xi": _fmt(mean([r.intensity for r in reports])),
        "pair": "avg",
        "injection": str(round(mean([r.injection for r in reports]))),
        "success_rate": _fmt(mean([r.success_rate for r in reports])),
        "accuracy_loss": _fmt(mean([r.accuracy_loss for r in reports])),
        "phash_sim": _fmt(mean([r.stealth.phash_sim for r in with_stealth])) if with_stealth else "",
        "hf_mean": _fmt(mean([r.stealth.hf_mean for r in with_stealth])) if with_stealth else "",
        "hf_stdev": _fmt(mean([r.stealth.hf_stdev for r in with_stealth])) if with_stealth else "",
        "seed": "avg",
    }


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_csv(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(render_csv(rows))


def write_jsonl(path, reports: list[ExperimentReport]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in reports:
            f.write(r.to_json() + "\n")
