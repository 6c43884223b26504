"""Layer primitives: specs, shape rules, forward passes and hand-derived backward passes.

Activations are batched arrays with a leading sample axis.  Feature maps are
NHWC, convolution kernels are (k, k, in_channels, filters), dense weights are
(in_features, units).  Convolutions are valid-padding stride-1; pooling is
non-overlapping (kernel == stride).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArchitectureError

CONV = "conv"
MAXPOOL = "maxpool"
DENSE = "dense"
RELU = "relu"
DROPOUT = "dropout"
CONCAT_SKIP = "concat-skip"
SOFTMAX_OUTPUT = "softmax-output"

LAYER_KINDS = (CONV, MAXPOOL, DENSE, RELU, DROPOUT, CONCAT_SKIP, SOFTMAX_OUTPUT)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward architecture.

    Only the fields relevant to ``kind`` are meaningful; the rest keep their
    defaults.  ``source`` is the index of the earlier layer whose output a
    concat-skip joins with its direct input.
    """

    kind: str
    filters: int = 0
    kernel: int = 0
    stride: int = 1
    units: int = 0
    keep_prob: float = 1.0
    source: int = -1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")
        if self.kind == CONV:
            if self.filters <= 0 or self.kernel <= 0:
                raise ArchitectureError("conv needs positive filters and kernel")
            if self.stride != 1:
                raise ArchitectureError("conv layers are stride-1 only")
        elif self.kind == MAXPOOL:
            if self.kernel <= 0 or self.stride <= 0:
                raise ArchitectureError("maxpool needs positive kernel and stride")
            if self.kernel != self.stride:
                raise ArchitectureError("only non-overlapping pooling is supported")
        elif self.kind in (DENSE, SOFTMAX_OUTPUT):
            if self.units <= 0:
                raise ArchitectureError(f"{self.kind} needs positive units")
        elif self.kind == DROPOUT:
            if not 0.0 < self.keep_prob <= 1.0:
                raise ArchitectureError("dropout keep probability must be in (0, 1]")
        elif self.kind == CONCAT_SKIP:
            if self.source < 0:
                raise ArchitectureError("concat-skip needs a non-negative source index")


def conv(filters: int, kernel: int) -> LayerSpec:
    return LayerSpec(CONV, filters=filters, kernel=kernel)


def maxpool(kernel: int = 2) -> LayerSpec:
    return LayerSpec(MAXPOOL, kernel=kernel, stride=kernel)


def dense(units: int) -> LayerSpec:
    return LayerSpec(DENSE, units=units)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def dropout(keep_prob: float = 0.5) -> LayerSpec:
    return LayerSpec(DROPOUT, keep_prob=keep_prob)


def concat_skip(source: int) -> LayerSpec:
    return LayerSpec(CONCAT_SKIP, source=source)


def softmax_output(units: int) -> LayerSpec:
    return LayerSpec(SOFTMAX_OUTPUT, units=units)


def _flat_size(shape) -> int:
    return int(np.prod(shape))


def infer_shapes(arch, input_shape):
    """Propagate ``input_shape`` through ``arch``; returns per-layer output shapes.

    Raises ArchitectureError when shapes cannot chain (kernel larger than a
    feature map, concat-skip pointing forward, ...).
    """
    shapes = []
    cur = tuple(input_shape)
    for i, spec in enumerate(arch):
        if spec.kind == CONV:
            if len(cur) != 3:
                raise ArchitectureError(f"layer {i}: conv needs an HWC input, got {cur}")
            h, w, c = cur
            if spec.kernel > h or spec.kernel > w:
                raise ArchitectureError(f"layer {i}: kernel {spec.kernel} exceeds input {h}x{w}")
            cur = (h - spec.kernel + 1, w - spec.kernel + 1, spec.filters)
        elif spec.kind == MAXPOOL:
            if len(cur) != 3:
                raise ArchitectureError(f"layer {i}: maxpool needs an HWC input, got {cur}")
            h, w, c = cur
            if spec.kernel > h or spec.kernel > w:
                raise ArchitectureError(f"layer {i}: pool {spec.kernel} exceeds input {h}x{w}")
            cur = (h // spec.stride, w // spec.stride, c)
        elif spec.kind in (DENSE, SOFTMAX_OUTPUT):
            cur = (spec.units,)
        elif spec.kind in (RELU, DROPOUT):
            pass
        elif spec.kind == CONCAT_SKIP:
            if spec.source >= i:
                raise ArchitectureError(f"layer {i}: concat source {spec.source} is not earlier")
            cur = (_flat_size(shapes[spec.source]) + _flat_size(cur),)
        shapes.append(cur)
    return shapes


# ---------------------------------------------------------------------------
# forward / backward kernels
#
# Convolution and pooling are written as k*k shifted-slice accumulations:
# every term is a well-shaped GEMM or a contiguous strided copy, which keeps
# memory traffic low compared with materializing im2col matrices.


def _unfold(x, k, oh, ow):
    """Contiguous (n, oh, ow, k*k*c) window buffer, blocks in (row, col) order."""
    n, _, _, c = x.shape
    cols = np.empty((n, oh, ow, k * k * c), dtype=x.dtype)
    pos = 0
    for i in range(k):
        for j in range(k):
            cols[..., pos : pos + c] = x[:, i : i + oh, j : j + ow, :]
            pos += c
    return cols


def conv_forward(x, w, b):
    k, _, cin, f = w.shape
    n, h, wd, _ = x.shape
    oh, ow = h - k + 1, wd - k + 1
    cols = _unfold(x, k, oh, ow)
    out = cols.reshape(-1, k * k * cin) @ w.reshape(-1, f) + b
    return out.reshape(n, oh, ow, f), (cols, x.shape)


def conv_backward(dout, w, cache):
    cols, x_shape = cache
    k, _, cin, f = w.shape
    n, oh, ow, _ = dout.shape
    d2 = dout.reshape(-1, f)
    dw = (cols.reshape(-1, k * k * cin).T @ d2).reshape(w.shape)
    dcols = (d2 @ w.reshape(-1, f).T).reshape(n, oh, ow, k * k * cin)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    pos = 0
    for i in range(k):
        for j in range(k):
            dx[:, i : i + oh, j : j + ow, :] += dcols[..., pos : pos + cin]
            pos += cin
    return dx, dw, dout.sum(axis=(0, 1, 2))


def maxpool_forward(x, k):
    n, h, w, c = x.shape
    oh, ow = h // k, w // k
    xc = x[:, : oh * k, : ow * k, :]
    # window positions stacked in row-major order, so argmax resolves ties
    # toward the first maximal element of the window
    stack = np.stack([xc[:, i::k, j::k, :] for i in range(k) for j in range(k)], axis=-1)
    idx = stack.argmax(axis=-1)
    out = np.take_along_axis(stack, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool_backward(dout, k, cache):
    idx, x_shape = cache
    n, h, w, c = x_shape
    oh, ow = dout.shape[1], dout.shape[2]
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dxc = dx[:, : oh * k, : ow * k, :]
    for m in range(k * k):
        i, j = divmod(m, k)
        dxc[:, i::k, j::k, :] += dout * (idx == m)
    return dx


def dense_forward(x, w, b):
    x2 = x.reshape(x.shape[0], -1)
    return x2 @ w + b, x2


def dense_backward(dout, w, x2, x_shape):
    dw = x2.T @ dout
    db = dout.sum(axis=0)
    dx = (dout @ w.T).reshape(x_shape)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def dropout_forward(x, keep_prob, rng):
    scale = np.asarray(1.0 / keep_prob, dtype=x.dtype)
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype) * scale
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout * mask


def concat_forward(source_out, x):
    s2 = source_out.reshape(source_out.shape[0], -1)
    x2 = x.reshape(x.shape[0], -1)
    return np.concatenate([s2, x2], axis=1), (source_out.shape, x.shape, s2.shape[1])


def concat_backward(dout, cache):
    source_shape, x_shape, split = cache
    dsource = dout[:, :split].reshape(source_shape)
    dx = dout[:, split:].reshape(x_shape)
    return dsource, dx
