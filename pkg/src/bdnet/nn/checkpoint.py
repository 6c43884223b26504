"""Model checkpoint serialization.

Layout: magic ``BDNET1\\0\\0``, then little-endian int32 header
(input h, w, c, class count, pixel divisor, layer count), then per layer a
kind tag plus its fixed integer parameters, then all parameter tensors as
little-endian float32 in architecture order (weights before biases).
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import CheckpointFormatError
from . import layers as L
from .layers import LayerSpec
from .model import Model

MAGIC = b"BDNET1\x00\x00"

_KIND_TAGS = {
    L.CONV: 1,
    L.MAXPOOL: 2,
    L.DENSE: 3,
    L.RELU: 4,
    L.DROPOUT: 5,
    L.CONCAT_SKIP: 6,
    L.SOFTMAX_OUTPUT: 7,
}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_KEEP_PROB_UNIT = 1_000_000


def _layer_ints(spec: LayerSpec) -> list[int]:
    if spec.kind == L.CONV:
        return [spec.filters, spec.kernel, spec.stride]
    if spec.kind == L.MAXPOOL:
        return [spec.kernel, spec.stride]
    if spec.kind in (L.DENSE, L.SOFTMAX_OUTPUT):
        return [spec.units]
    if spec.kind == L.DROPOUT:
        return [round(spec.keep_prob * _KEEP_PROB_UNIT)]
    if spec.kind == L.CONCAT_SKIP:
        return [spec.source]
    return []


def _spec_from_ints(kind: str, ints: list[int]) -> LayerSpec:
    if kind == L.CONV:
        return LayerSpec(kind, filters=ints[0], kernel=ints[1], stride=ints[2])
    if kind == L.MAXPOOL:
        return LayerSpec(kind, kernel=ints[0], stride=ints[1])
    if kind in (L.DENSE, L.SOFTMAX_OUTPUT):
        return LayerSpec(kind, units=ints[0])
    if kind == L.DROPOUT:
        return LayerSpec(kind, keep_prob=ints[0] / _KEEP_PROB_UNIT)
    if kind == L.CONCAT_SKIP:
        return LayerSpec(kind, source=ints[0])
    return LayerSpec(kind)


_INT_COUNT = {L.CONV: 3, L.MAXPOOL: 2, L.DENSE: 1, L.RELU: 0,
              L.DROPOUT: 1, L.CONCAT_SKIP: 1, L.SOFTMAX_OUTPUT: 1}


def save_model(model: Model, path) -> None:
    divisor = round(1.0 / model.input_scale) if model.input_scale != 1.0 else 1
    with open(path, "wb") as f:
        f.write(MAGIC)
        h, w, c = model.input_shape
        f.write(struct.pack("<6i", h, w, c, model.class_count, divisor, len(model.arch)))
        for spec in model.arch:
            ints = _layer_ints(spec)
            f.write(struct.pack(f"<{1 + len(ints)}i", _KIND_TAGS[spec.kind], *ints))
        for _, _, arr in model.param_arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointFormatError("checkpoint truncated")
    return data


def load_model(path) -> Model:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointFormatError("bad checkpoint magic")
        h, w, c, class_count, divisor, n_layers = struct.unpack("<6i", _read_exact(f, 24))
        if n_layers <= 0 or divisor <= 0:
            raise CheckpointFormatError("corrupt checkpoint header")
        arch = []
        for _ in range(n_layers):
            (tag,) = struct.unpack("<i", _read_exact(f, 4))
            if tag not in _TAG_KINDS:
                raise CheckpointFormatError(f"unknown layer tag {tag}")
            kind = _TAG_KINDS[tag]
            n_ints = _INT_COUNT[kind]
            ints = list(struct.unpack(f"<{n_ints}i", _read_exact(f, 4 * n_ints))) if n_ints else []
            arch.append(_spec_from_ints(kind, ints))
        shapes = L.infer_shapes(arch, (h, w, c))
        params: list[dict] = []
        cur = (h, w, c)
        for spec, out_shape in zip(arch, shapes):
            if spec.kind == L.CONV:
                wshape = (spec.kernel, spec.kernel, cur[-1], spec.filters)
                bshape = (spec.filters,)
            elif spec.kind in (L.DENSE, L.SOFTMAX_OUTPUT):
                wshape = (L._flat_size(cur), spec.units)
                bshape = (spec.units,)
            else:
                params.append({})
                cur = out_shape
                continue
            wn, bn = int(np.prod(wshape)), int(np.prod(bshape))
            wdat = np.frombuffer(_read_exact(f, 4 * wn), dtype="<f4").reshape(wshape)
            bdat = np.frombuffer(_read_exact(f, 4 * bn), dtype="<f4").reshape(bshape)
            params.append({"w": wdat.astype(np.float32), "b": bdat.astype(np.float32)})
            cur = out_shape
        if f.read(1):
            raise CheckpointFormatError("trailing bytes after parameters")
    return Model(tuple(arch), (h, w, c), class_count, params,
                 input_scale=1.0 / divisor, shapes=tuple(shapes))
