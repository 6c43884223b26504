"""Feed-forward CNN model: construction, inference, and reverse-mode gradients.

A Model is an immutable value: training code replaces parameters through
``with_params`` rather than mutating in place, so a shared model can be read
concurrently.  Pixel inputs are 8-bit values; ``input_scale`` (1/255 for the
bundled architectures) is applied inside the forward pass, so gradients with
respect to inputs are in raw pixel units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ArchitectureError, ClassIndexError, EmptyBatchError, ShapeError
from . import layers as L
from .layers import LayerSpec

# GradientSet: per-layer dicts {"w": ..., "b": ...}, empty for parameterless layers.
GradientSet = list


@dataclass
class Model:
    arch: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    class_count: int
    params: list[dict]
    input_scale: float = 1.0
    dtype: type = np.float32
    shapes: tuple = field(default=(), repr=False)

    def __post_init__(self):
        self.arch = tuple(self.arch)
        if not self.arch or self.arch[-1].kind != L.SOFTMAX_OUTPUT:
            raise ArchitectureError("architecture must end with a softmax-output layer")
        if self.arch[-1].units != self.class_count:
            raise ArchitectureError("output units must equal class_count")
        if not self.shapes:
            self.shapes = tuple(L.infer_shapes(self.arch, self.input_shape))
        if len(self.params) != len(self.arch):
            raise ArchitectureError("one parameter entry per layer required")

    def with_params(self, params: list[dict]) -> "Model":
        return replace(self, params=params)

    def param_arrays(self):
        """Flat iterator over (layer_index, name, array)."""
        for i, p in enumerate(self.params):
            for name in ("w", "b"):
                if name in p:
                    yield i, name, p[name]

    def parameter_count(self) -> int:
        return sum(a.size for _, _, a in self.param_arrays())


def _truncated_normal(rng, shape, std, dtype):
    out = rng.normal(0.0, std, size=shape)
    for _ in range(64):
        bad = np.abs(out) > 2.0 * std
        if not bad.any():
            break
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
    return np.clip(out, -2.0 * std, 2.0 * std).astype(dtype)


def initialize(arch, input_shape, class_count, rng_seed, *, input_scale=1.0,
               dtype=np.float32, weight_std=0.1, bias_init=0.1) -> Model:
    """Build a Model with truncated-normal weights and constant biases."""
    arch = tuple(arch)
    shapes = L.infer_shapes(arch, input_shape)
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    params: list[dict] = []
    cur = tuple(input_shape)
    for spec, out_shape in zip(arch, shapes):
        if spec.kind == L.CONV:
            k, cin, f = spec.kernel, cur[-1], spec.filters
            params.append({
                "w": _truncated_normal(rng, (k, k, cin, f), weight_std, dtype),
                "b": np.full((f,), bias_init, dtype=dtype),
            })
        elif spec.kind in (L.DENSE, L.SOFTMAX_OUTPUT):
            d = L._flat_size(cur)
            params.append({
                "w": _truncated_normal(rng, (d, spec.units), weight_std, dtype),
                "b": np.full((spec.units,), bias_init, dtype=dtype),
            })
        else:
            params.append({})
        cur = out_shape
    return Model(arch, tuple(input_shape), class_count, params,
                 input_scale=input_scale, dtype=dtype, shapes=tuple(shapes))


def _as_batch(model: Model, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.shape == model.input_shape:
        return x[None].astype(model.dtype, copy=False), True
    if x.ndim == len(model.input_shape) + 1 and x.shape[1:] == model.input_shape:
        return x.astype(model.dtype, copy=False), False
    raise ShapeError(f"input shape {x.shape} does not match model input {model.input_shape}")


def _dropout_rng(rng_seed):
    if isinstance(rng_seed, (np.random.Generator, np.random.SeedSequence)):
        return np.random.default_rng(rng_seed)
    return np.random.default_rng(np.random.SeedSequence(rng_seed))


def _run_forward(model: Model, xb, train: bool, rng):
    """Returns (per-layer outputs, per-layer backward caches)."""
    outs, caches = [], []
    cur = xb * np.asarray(model.input_scale, dtype=model.dtype)
    for i, spec in enumerate(model.arch):
        p = model.params[i]
        if spec.kind == L.CONV:
            cur, cache = L.conv_forward(cur, p["w"], p["b"])
            caches.append(cache)
        elif spec.kind == L.MAXPOOL:
            cur, cache = L.maxpool_forward(cur, spec.kernel)
            caches.append(cache)
        elif spec.kind in (L.DENSE, L.SOFTMAX_OUTPUT):
            in_shape = cur.shape
            cur, x2 = L.dense_forward(cur, p["w"], p["b"])
            caches.append((x2, in_shape))
        elif spec.kind == L.RELU:
            cur, mask = L.relu_forward(cur)
            caches.append(mask)
        elif spec.kind == L.DROPOUT:
            if train:
                cur, mask = L.dropout_forward(cur, spec.keep_prob, rng)
                caches.append(mask)
            else:
                caches.append(None)
        elif spec.kind == L.CONCAT_SKIP:
            cur, cache = L.concat_forward(outs[spec.source], cur)
            caches.append(cache)
        outs.append(cur)
    return outs, caches


def _backward(model: Model, outs, caches, dlogits, want_param_grads=True):
    """Backpropagate dL/dlogits; returns (input gradient, GradientSet)."""
    n_layers = len(model.arch)
    gout = [None] * n_layers
    gout[-1] = dlogits
    grads: GradientSet = [{} for _ in range(n_layers)]
    dinput = None

    def _route(i, dx):
        nonlocal dinput
        if i == 0:
            dinput = dx if dinput is None else dinput + dx
        elif gout[i - 1] is None:
            gout[i - 1] = dx
        else:
            gout[i - 1] = gout[i - 1] + dx

    for i in reversed(range(n_layers)):
        spec, p, g = model.arch[i], model.params[i], gout[i]
        if spec.kind == L.CONV:
            dx, dw, db = L.conv_backward(g, p["w"], caches[i])
            if want_param_grads:
                grads[i] = {"w": dw, "b": db}
            _route(i, dx)
        elif spec.kind == L.MAXPOOL:
            _route(i, L.maxpool_backward(g, spec.kernel, caches[i]))
        elif spec.kind in (L.DENSE, L.SOFTMAX_OUTPUT):
            x2, in_shape = caches[i]
            dx, dw, db = L.dense_backward(g, p["w"], x2, in_shape)
            if want_param_grads:
                grads[i] = {"w": dw, "b": db}
            _route(i, dx)
        elif spec.kind == L.RELU:
            _route(i, L.relu_backward(g, caches[i]))
        elif spec.kind == L.DROPOUT:
            _route(i, g if caches[i] is None else L.dropout_backward(g, caches[i]))
        elif spec.kind == L.CONCAT_SKIP:
            dsource, dx = L.concat_backward(g, caches[i])
            si = spec.source
            gout[si] = dsource if gout[si] is None else gout[si] + dsource
            _route(i, dx)
    dinput = dinput * np.asarray(model.input_scale, dtype=dinput.dtype)
    return dinput, grads


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: Model, x, train_mode: bool = False, rng_seed=0):
    """Run inference; returns (logits, probabilities).

    With ``train_mode`` dropout layers are sampled from ``rng_seed``;
    otherwise they are the identity and the pass is deterministic.
    Accepts a single sample or a batch.
    """
    xb, single = _as_batch(model, x)
    rng = _dropout_rng(rng_seed) if train_mode else None
    outs, _ = _run_forward(model, xb, train_mode, rng)
    logits = outs[-1]
    probs = softmax(logits)
    if single:
        return logits[0], probs[0]
    return logits, probs


def predict(model: Model, images, batch_size: int = 256) -> np.ndarray:
    """Argmax labels for an array of images, evaluated in batches."""
    images = np.asarray(images)
    preds = []
    for i in range(0, len(images), batch_size):
        logits, _ = forward(model, images[i : i + batch_size])
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def _softmax_cross_entropy(logits, labels):
    n = len(labels)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype)


def loss_and_param_gradients(model: Model, batch, rng_seed=0):
    """Mean cross-entropy over a batch and its parameter gradients.

    ``batch`` is either a list of (image, label) pairs or an (images, labels)
    tuple of arrays.  Dropout, if present, is sampled from ``rng_seed``.
    """
    if isinstance(batch, tuple) and len(batch) == 2:
        images, labels = batch
    else:
        if len(batch) == 0:
            raise EmptyBatchError("empty batch")
        images = np.stack([np.asarray(img) for img, _ in batch])
        labels = np.array([lab for _, lab in batch])
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise EmptyBatchError("empty batch")
    if labels.min() < 0 or labels.max() >= model.class_count:
        raise ClassIndexError("labels must be in [0, class_count)")
    xb, _ = _as_batch(model, images)
    rng = _dropout_rng(rng_seed)
    outs, caches = _run_forward(model, xb, True, rng)
    loss, dlogits = _softmax_cross_entropy(outs[-1], labels)
    _, grads = _backward(model, outs, caches, dlogits)
    return loss, grads


def class_score_input_gradient(model: Model, x, class_index: int) -> np.ndarray:
    """Gradient of the pre-softmax logit of ``class_index`` w.r.t. the input."""
    if not 0 <= class_index < model.class_count:
        raise ClassIndexError(f"class index {class_index} out of range")
    xb, single = _as_batch(model, x)
    outs, caches = _run_forward(model, xb, False, None)
    dlogits = np.zeros_like(outs[-1])
    dlogits[:, class_index] = 1.0
    dinput, _ = _backward(model, outs, caches, dlogits, want_param_grads=False)
    return dinput[0] if single else dinput


def logit_margin_and_input_gradient(model: Model, x, a: int, b: int):
    """(logit_a - logit_b, its input gradient, predicted class) in one pass.

    Equivalent to two class_score_input_gradient calls; linearity of the
    backward pass lets a single sweep with upstream e_a - e_b do both.
    """
    for idx in (a, b):
        if not 0 <= idx < model.class_count:
            raise ClassIndexError(f"class index {idx} out of range")
    xb, single = _as_batch(model, x)
    if not single:
        raise ShapeError("logit margin gradient expects a single sample")
    outs, caches = _run_forward(model, xb, False, None)
    logits = outs[-1]
    dlogits = np.zeros_like(logits)
    dlogits[:, a] = 1.0
    dlogits[:, b] = -1.0
    dinput, _ = _backward(model, outs, caches, dlogits, want_param_grads=False)
    return float(logits[0, a] - logits[0, b]), dinput[0], int(logits[0].argmax())
