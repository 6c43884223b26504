"""Datasets: IDX files, deterministic synthetic corpora, augmentation, splits.

Two generators stand in for full-size photo corpora at desk scale:
``generate_synthetic`` draws colored parametric shapes (one shape/hue pairing
per class) and ``generate_digits`` renders 28x28 grayscale digit glyphs on a
clean black background with per-sample similarity jitter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxFormatError, ShapeError, SplitPlanError
from .imageops import (affine_warp, bilinear_resize, convolve_replicate,
                       gaussian_kernel2d, similarity_warp, warp_coordinates)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, H, W, C) uint8
    labels: np.ndarray  # (N,) int64
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError(f"images must be NHWC, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError("images and labels must have equal length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeError("labels must be in [0, class_count)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def take(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(self.images[idx], self.labels[idx], self.class_count)

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def concat(*datasets: LabeledDataset) -> LabeledDataset:
    parts = [d for d in datasets if len(d)]
    if not parts:
        return datasets[0]
    nc = max(d.class_count for d in datasets)
    return LabeledDataset(np.concatenate([d.images for d in parts]),
                          np.concatenate([d.labels for d in parts]), nc)


# ---------------------------------------------------------------------------
# IDX files


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxFormatError("idx file truncated")
    return data


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an images/labels IDX pair; pixel bytes are preserved exactly."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">4i", _read_exact(f, 16))
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}")
        raw = _read_exact(f, count * rows * cols)
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols, 1)
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(">2i", _read_exact(f, 8))
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}")
        if lcount != count:
            raise IdxFormatError(f"label count {lcount} != image count {count}")
        labels = np.frombuffer(_read_exact(f, lcount), dtype=np.uint8).astype(np.int64)
    return LabeledDataset(images, labels, int(labels.max()) + 1 if lcount else 0)


def save_idx(ds: LabeledDataset, images_path, labels_path) -> None:
    n, h, w, c = ds.images.shape
    if c != 1:
        raise ShapeError("idx files hold single-channel images")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4i", IDX_IMAGE_MAGIC, n, h, w))
        f.write(ds.images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2i", IDX_LABEL_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# synthetic corpora


def _shape_mask(shape_id: int, size: int, cy, cx, radius, angle):
    yg, xg = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    th = np.deg2rad(angle)
    dy, dx = yg - cy, xg - cx
    u = np.cos(th) * dx + np.sin(th) * dy
    w = -np.sin(th) * dx + np.cos(th) * dy
    r = radius
    if shape_id == 0:  # disk
        return u ** 2 + w ** 2 <= r ** 2
    if shape_id == 1:  # square
        return np.maximum(np.abs(u), np.abs(w)) <= r * 0.9
    if shape_id == 2:  # triangle
        return (w >= -r) & (w <= r) & (np.abs(u) <= (r - w) * 0.7)
    if shape_id == 3:  # ring
        rho = u ** 2 + w ** 2
        return (rho <= r ** 2) & (rho >= (0.55 * r) ** 2)
    if shape_id == 4:  # cross
        inside = np.maximum(np.abs(u), np.abs(w)) <= r
        return inside & ((np.abs(u) <= 0.4 * r) | (np.abs(w) <= 0.4 * r))
    # diamond
    return np.abs(u) + np.abs(w) <= r * 1.1


def _hue_rgb(hue: float) -> np.ndarray:
    """Saturated RGB color for a hue in [0, 1)."""
    h6 = (hue % 1.0) * 6.0
    k = np.array([(5 + h6) % 6, (3 + h6) % 6, (1 + h6) % 6])
    return 1.0 - np.clip(np.minimum(k, 4 - k), 0.0, 1.0)


def generate_synthetic(class_count: int, per_class: int, size: int = 32,
                       channels: int = 3, rng_seed: int = 0) -> LabeledDataset:
    """Colored-shape corpus: class k is a fixed shape/hue pair.

    Per-sample jitter (position, scale, rotation, brightness, background
    level), pixel noise, and a random distractor blob keep the task from
    saturating instantly while staying learnable by a small net.
    """
    if class_count < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, class_count, per_class, size]))
    n = class_count * per_class
    images = np.zeros((n, size, size, channels), dtype=np.uint8)
    labels = np.zeros(n, dtype=np.int64)
    base_radius = size * 0.27
    for k in range(class_count):
        hue = k / class_count
        shape_id = k % 6
        for j in range(per_class):
            idx = k * per_class + j
            level = rng.uniform(0.55, 1.0)
            color = _hue_rgb(hue) * 190.0 * level + 55.0
            if channels == 1:
                color = np.array([float(np.mean(color))])
            img = np.full((size, size, channels), rng.uniform(15.0, 55.0))
            # two distractor blobs in random hues
            for _ in range(2):
                d_color = _hue_rgb(rng.uniform(0, 1)) * 150.0 + 40.0
                if channels == 1:
                    d_color = np.array([float(np.mean(d_color))])
                d_mask = _shape_mask(int(rng.integers(6)), size,
                                     rng.uniform(2, size - 3), rng.uniform(2, size - 3),
                                     rng.uniform(3.0, 6.0), rng.uniform(0, 360))
                img[d_mask] = d_color
            cy = size / 2 - 0.5 + rng.uniform(-4, 4)
            cx = size / 2 - 0.5 + rng.uniform(-4, 4)
            radius = base_radius * rng.uniform(0.7, 1.2)
            mask = _shape_mask(shape_id, size, cy, cx, radius, rng.uniform(0, 360))
            img[mask] = color
            img += rng.uniform(-2, 2, size=img.shape)
            images[idx] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
            labels[idx] = k
    return LabeledDataset(images, labels, class_count)


_DIGIT_FONT = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
]

# alternate stroke styles, keyed by digit
_DIGIT_FONT_ALT = {
    0: ["01110", "10001", "10001", "10001", "10001", "10001", "01110"],
    1: ["00100", "00100", "00100", "00100", "00100", "00100", "00100"],
    2: ["01110", "10001", "00001", "00110", "01000", "10000", "11111"],
    3: ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00111"],
    5: ["11111", "10000", "10000", "11110", "00001", "00001", "11110"],
    6: ["01110", "10000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "00100", "01000", "01000"],
    8: ["01110", "10001", "01010", "00100", "01010", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00001", "00001"],
}


def _glyph_canvas(rows, size: int) -> np.ndarray:
    bitmap = np.array([[int(ch) for ch in row] for row in rows], dtype=np.float64)
    up = np.kron(bitmap, np.ones((3, 3)))  # 21 x 15
    canvas = np.zeros((size, size), dtype=np.float64)
    oy = (size - up.shape[0]) // 2
    ox = (size - up.shape[1]) // 2
    canvas[oy : oy + up.shape[0], ox : ox + up.shape[1]] = up
    return canvas


def _elastic_field(rng, size: int, amplitude: float):
    coarse = rng.uniform(-1.0, 1.0, size=(4, 4))
    return bilinear_resize(coarse, size, size) * amplitude


def generate_digits(per_class: int, size: int = 28, rng_seed: int = 0) -> LabeledDataset:
    """Grayscale digit corpus on an exact-zero background.

    Each sample is a glyph (two stroke styles for several digits) pushed
    through a random affine map with shear, an elastic displacement field,
    and stroke-weight/intensity variation, approximating handwritten-digit
    diversity while staying fully deterministic per seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, per_class, size, 7]))
    n = 10 * per_class
    images = np.zeros((n, size, size, 1), dtype=np.uint8)
    labels = np.zeros(n, dtype=np.int64)
    glyphs = {d: [_glyph_canvas(_DIGIT_FONT[d], size)] for d in range(10)}
    for d, rows in _DIGIT_FONT_ALT.items():
        glyphs[d].append(_glyph_canvas(rows, size))
    yg, xg = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    for d in range(10):
        variants = glyphs[d]
        for j in range(per_class):
            idx = d * per_class + j
            g = variants[rng.integers(len(variants))]
            # most samples deform moderately; a heavy tail supplies the
            # intrinsically ambiguous cases that keep training loss alive
            heavy = rng.random() < 0.15
            rot, sh = (22.0, 0.45) if heavy else (12.0, 0.22)
            ela = (2.5, 4.0) if heavy else (0.6, 2.2)
            th = np.deg2rad(rng.uniform(-rot, rot))
            sy, sx = rng.uniform(0.7, 1.2), rng.uniform(0.7, 1.2)
            shear = rng.uniform(-sh, sh)
            cos_t, sin_t = np.cos(th), np.sin(th)
            fwd = (np.array([[cos_t, -sin_t], [sin_t, cos_t]])
                   @ np.array([[1.0, shear], [0.0, 1.0]])
                   @ np.diag([sy, sx]))
            inv = np.linalg.inv(fwd)
            warped = affine_warp(g, inv, rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5))
            dy = _elastic_field(rng, size, rng.uniform(*ela))
            dx = _elastic_field(rng, size, rng.uniform(*ela))
            warped = warp_coordinates(warped, yg + dy, xg + dx)
            sigma = rng.uniform(0.4, 1.4)  # pen weight
            blurred = convolve_replicate(warped, gaussian_kernel2d(5, sigma))
            # uneven ink: smooth multiplicative brightness field along strokes
            texture = 1.0 + bilinear_resize(rng.uniform(-0.4, 0.4, (4, 4)), size, size)
            level = rng.uniform(140, 255)
            img = np.clip(blurred, 0.0, 1.0) ** rng.uniform(0.7, 1.5) * level * texture
            images[idx, :, :, 0] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
            labels[idx] = d
    return LabeledDataset(images, labels, 10)


# ---------------------------------------------------------------------------
# augmentation


def augment(ds: LabeledDataset, factor: int, rng_seed: int = 0, *,
            max_rotation: float = 15.0, scale_range=(0.9, 1.1),
            max_translate: float = 2.0) -> LabeledDataset:
    """Originals plus ``factor`` similarity-transformed copies of each item."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, factor]))
    n = len(ds)
    out_images = [ds.images]
    out_labels = [ds.labels]
    for _ in range(factor):
        batch = np.empty_like(ds.images)
        for i in range(n):
            warped = similarity_warp(ds.images[i].astype(np.float64),
                                     rng.uniform(-max_rotation, max_rotation),
                                     rng.uniform(*scale_range),
                                     rng.uniform(-max_translate, max_translate),
                                     rng.uniform(-max_translate, max_translate))
            batch[i] = np.clip(np.rint(warped), 0, 255).astype(np.uint8)
        out_images.append(batch)
        out_labels.append(ds.labels.copy())
    return LabeledDataset(np.concatenate(out_images), np.concatenate(out_labels),
                          ds.class_count)


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitPlan:
    major: float = 0.854
    minor: float = 0.095
    test: float = 0.051
    validation: float = 0.2
    seed: int = 0

    def __post_init__(self):
        total = self.major + self.minor + self.test
        if abs(total - 1.0) > 1e-9:
            raise SplitPlanError(f"major+minor+test = {total}, expected 1")
        if min(self.major, self.minor, self.test) < 0:
            raise SplitPlanError("fractions must be non-negative")
        if not 0 <= self.validation < 1:
            raise SplitPlanError("validation fraction must be in [0, 1)")


@dataclass
class Splits:
    major: LabeledDataset
    minor: LabeledDataset
    test: LabeledDataset
    validation_fraction: float


def _largest_remainder(total: int, fractions) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    rem = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (raw[i] - counts[i], -i), reverse=True)
    for i in order[:rem]:
        counts[i] += 1
    return counts


def split(ds: LabeledDataset, plan: SplitPlan) -> Splits:
    """Seed-deterministic stratified partition into major/minor/test.

    Global split sizes follow the fractions to within one item; per-class
    allocations deviate from them by at most one item per split.
    """
    fractions = (plan.major, plan.minor, plan.test)
    targets = _largest_remainder(len(ds), fractions)
    rng = np.random.default_rng(np.random.SeedSequence([plan.seed, len(ds)]))
    parts = [[], [], []]
    # per-class floor allocation, then distribute leftovers against the
    # remaining global capacity, largest fractional part first
    class_order = list(range(ds.class_count))
    floors, fracs, shuffled = {}, {}, {}
    for k in class_order:
        idx = ds.class_indices(k)
        shuffled[k] = rng.permutation(idx)
        quota = [len(idx) * f for f in fractions]
        floors[k] = [int(np.floor(q)) for q in quota]
        fracs[k] = [q - f for q, f in zip(quota, floors[k])]
    capacity = [t - sum(floors[k][j] for k in class_order) for j, t in enumerate(targets)]
    extras = {k: [0, 0, 0] for k in class_order}
    leftover = [(fracs[k][j], k, j) for k in class_order for j in range(3)]
    leftover.sort(key=lambda t: (-t[0], t[1], t[2]))
    need = {k: len(shuffled[k]) - sum(floors[k]) for k in class_order}
    for _, k, j in leftover:
        if need[k] > 0 and capacity[j] > 0:
            extras[k][j] += 1
            need[k] -= 1
            capacity[j] -= 1
    for k in class_order:  # any residue goes wherever capacity remains
        while need[k] > 0:
            j = next(i for i in range(3) if capacity[i] > 0)
            extras[k][j] += 1
            need[k] -= 1
            capacity[j] -= 1
    for k in class_order:
        pos = 0
        for j in range(3):
            take = floors[k][j] + extras[k][j]
            parts[j].extend(shuffled[k][pos : pos + take].tolist())
            pos += take
    sets = [ds.take(sorted(p)) for p in parts]
    return Splits(sets[0], sets[1], sets[2], plan.validation)


def carve_validation(ds: LabeledDataset, fraction: float, seed: int):
    """Stratified (train, validation) carve-out; deterministic per seed."""
    if not 0 <= fraction < 1:
        raise SplitPlanError("validation fraction must be in [0, 1)")
    if fraction == 0:
        return ds, ds.take([])
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(ds), 11]))
    val_idx = []
    for k in range(ds.class_count):
        idx = rng.permutation(ds.class_indices(k))
        n_val = int(round(len(idx) * fraction))
        val_idx.extend(idx[:n_val].tolist())
    val_mask = np.zeros(len(ds), dtype=bool)
    val_mask[val_idx] = True
    return ds.take(np.flatnonzero(~val_mask)), ds.take(np.flatnonzero(val_mask))


def stratified_subset(ds: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Seed-deterministic subset of ~n items with per-class proportions kept."""
    if n >= len(ds):
        return ds
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(ds), n]))
    per_class = _largest_remainder(n, [len(ds.class_indices(k)) / len(ds)
                                       for k in range(ds.class_count)])
    keep = []
    for k in range(ds.class_count):
        idx = rng.permutation(ds.class_indices(k))
        keep.extend(idx[: per_class[k]].tolist())
    return ds.take(sorted(keep))
