"""Shared raster helpers: grayscale, bilinear sampling, small convolutions.

All functions take HWC (or HW) arrays and work in float64; callers quantize.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(img) -> np.ndarray:
    """(H, W) float64 luminance plane from 1- or 3-channel input."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.ndim == 3 and a.shape[2] == 1:
        return a[:, :, 0]
    if a.ndim == 3 and a.shape[2] == 3:
        return a @ GRAY_WEIGHTS
    raise ShapeError(f"expected HW, HW1 or HW3 image, got {a.shape}")


def _sample_bilinear(plane, ys, xs):
    """Sample a 2-D plane at real coordinates with replicated borders."""
    h, w = plane.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    return ((1 - fy) * (1 - fx) * plane[y0, x0] + (1 - fy) * fx * plane[y0, x1]
            + fy * (1 - fx) * plane[y1, x0] + fy * fx * plane[y1, x1])


def bilinear_resize(plane, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resize of a 2-D plane."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    return _sample_bilinear(plane, ys[:, None], xs[None, :])


def warp_coordinates(img, src_y, src_x) -> np.ndarray:
    """Resample an image at the given source-coordinate grids (bilinear, replicate)."""
    a = np.asarray(img, dtype=np.float64)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    out = np.empty_like(a)
    for ch in range(a.shape[2]):
        out[:, :, ch] = _sample_bilinear(a[:, :, ch], src_y, src_x)
    return out[:, :, 0] if squeeze else out


def affine_warp(img, inverse_matrix, tx: float = 0.0, ty: float = 0.0) -> np.ndarray:
    """Warp by src = M_inv @ (dst - center - t) + center; bilinear, replicate."""
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yg, xg = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    dy = yg - cy - ty
    dx = xg - cx - tx
    m = np.asarray(inverse_matrix, dtype=np.float64)
    src_y = m[0, 0] * dy + m[0, 1] * dx + cy
    src_x = m[1, 0] * dy + m[1, 1] * dx + cx
    return warp_coordinates(a, src_y, src_x)


def similarity_warp(img, angle_deg: float, scale: float, tx: float, ty: float) -> np.ndarray:
    """Rotate/scale about the image center and translate; bilinear, replicate.

    Returns float64 with the input's shape.
    """
    th = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(th), np.sin(th)
    inv = np.array([[cos_t, sin_t], [-sin_t, cos_t]]) / scale
    return affine_warp(img, inv, tx, ty)


def gaussian_kernel2d(size: int, sigma: float) -> np.ndarray:
    """Normalized separable Gaussian kernel of odd ``size``."""
    half = (size - 1) / 2.0
    xs = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def convolve_replicate(img, kernel) -> np.ndarray:
    """2-D convolution per channel with replicated borders; float64 output."""
    a = np.asarray(img, dtype=np.float64)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(a, ((ph, ph), (pw, pw), (0, 0)), mode="edge")
    h, w, c = a.shape
    out = np.zeros_like(a)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i : i + h, j : j + w, :]
    return out[:, :, 0] if squeeze else out
