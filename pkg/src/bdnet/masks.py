"""Perturbation masks: patterned static generation, 8-bit application, file I/O.

A mask is a signed per-pixel intensity delta with the target image's shape.
Applying one clamps to [0, 255] and rounds half-to-even, so images stay 8-bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import MaskFormatError, MaskParameterError, ShapeError

MAGIC = b"BDMASK1\x00"

STATIC = "static"
ADAPTIVE = "adaptive"


@dataclass
class PerturbationMask:
    values: np.ndarray  # float32, (H, W, C)
    kind: str
    max_intensity: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise ShapeError(f"mask must be HWC, got shape {self.values.shape}")
        actual = float(np.abs(self.values).max()) if self.values.size else 0.0
        if actual > self.max_intensity + 1e-5:
            raise MaskParameterError(
                f"mask element {actual} exceeds declared max intensity {self.max_intensity}")

    @property
    def shape(self):
        return self.values.shape


def generate_static(height: int, width: int, channels: int, sub_region: int,
                    position=(0, 0), intensity: float = 10.0) -> PerturbationMask:
    """Grid mask: ``intensity`` wherever (i+i_p) mod r == 0 and (j+j_p) mod r == 0.

    One perturbed pixel per r x r sub-region, replicated across channels.
    """
    r = int(sub_region)
    i_p, j_p = int(position[0]), int(position[1])
    if r <= 0 or r > min(height, width):
        raise MaskParameterError(f"sub-region {r} must be in [1, min(h, w)]")
    if not (0 <= i_p < r and 0 <= j_p < r):
        raise MaskParameterError(f"position {position} outside sub-region {r}")
    if intensity < 0:
        raise MaskParameterError("intensity must be non-negative")
    rows = (np.arange(height) + i_p) % r == 0
    cols = (np.arange(width) + j_p) % r == 0
    grid = np.outer(rows, cols).astype(np.float32) * np.float32(intensity)
    values = np.repeat(grid[:, :, None], channels, axis=2)
    return PerturbationMask(values, STATIC, float(intensity),
                            params={"sub_region": r, "position": [i_p, j_p],
                                    "intensity": float(intensity)})


def zero_mask(height: int, width: int, channels: int) -> PerturbationMask:
    return PerturbationMask(np.zeros((height, width, channels), np.float32), STATIC, 0.0,
                            params={"intensity": 0.0})


def apply(image, mask: PerturbationMask) -> np.ndarray:
    """Add the mask to an 8-bit image; clamp to [0, 255], round half-to-even."""
    img = np.asarray(image)
    if img.shape != mask.values.shape:
        raise ShapeError(f"image shape {img.shape} != mask shape {mask.values.shape}")
    shifted = np.clip(img.astype(np.float64) + mask.values.astype(np.float64), 0.0, 255.0)
    return np.rint(shifted).astype(np.uint8)


def apply_batch(images, mask: PerturbationMask) -> np.ndarray:
    imgs = np.asarray(images)
    if imgs.shape[1:] != mask.values.shape:
        raise ShapeError(f"batch item shape {imgs.shape[1:]} != mask shape {mask.values.shape}")
    shifted = np.clip(imgs.astype(np.float64) + mask.values.astype(np.float64), 0.0, 255.0)
    return np.rint(shifted).astype(np.uint8)


def save_mask(mask: PerturbationMask, path) -> None:
    h, w, c = mask.values.shape
    meta = json.dumps({"kind": mask.kind, "max_intensity": mask.max_intensity,
                       "params": mask.params}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<3I", h, w, c))
        f.write(np.ascontiguousarray(mask.values, dtype="<f4").tobytes())
        f.write(struct.pack("<I", len(meta)))
        f.write(meta)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise MaskFormatError("mask file truncated")
    return data


def load_mask(path) -> PerturbationMask:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise MaskFormatError("bad mask magic")
        h, w, c = struct.unpack("<3I", _read_exact(f, 12))
        n = h * w * c
        values = np.frombuffer(_read_exact(f, 4 * n), dtype="<f4").reshape(h, w, c)
        (meta_len,) = struct.unpack("<I", _read_exact(f, 4))
        try:
            meta = json.loads(_read_exact(f, meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise MaskFormatError(f"corrupt mask metadata: {e}") from e
        if f.read(1):
            raise MaskFormatError("trailing bytes after metadata")
    return PerturbationMask(values.astype(np.float32), meta["kind"],
                            float(meta["max_intensity"]), params=meta.get("params", {}))
