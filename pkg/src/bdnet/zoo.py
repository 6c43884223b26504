"""Fixed architecture constructors.

``convnet-gtsrb`` is the 3-conv net whose third conv output is concatenated
with the second pooling output before the classifier head; ``lenet5-gtsrb``
and ``lenet5-mnist`` are the LeNet-5 adaptations; ``tiny-synthetic`` (and its
narrower surrogate sibling) are small 2-conv nets for minute-scale runs.
All carry a keep-0.5 dropout before the output layer and consume 8-bit pixels
scaled by 1/255 internally.
"""

from __future__ import annotations

from .errors import ArchitectureError
from .nn import layers as L
from .nn.model import Model, initialize

PIXEL_SCALE = 1.0 / 255.0


def _convnet_gtsrb(class_count):
    return [
        L.conv(6, 5), L.relu(), L.maxpool(2),
        L.conv(16, 5), L.relu(), L.maxpool(2),
        L.conv(400, 5), L.relu(),
        L.concat_skip(source=5),  # joins the 2nd pooling output, pool first
        L.dropout(0.5),
        L.softmax_output(class_count),
    ]


def _lenet5_gtsrb(class_count):
    return [
        L.conv(6, 5), L.relu(), L.maxpool(2),
        L.conv(16, 5), L.relu(), L.maxpool(2),
        L.conv(120, 5), L.relu(),
        L.dense(84), L.relu(),
        L.dropout(0.5),
        L.softmax_output(class_count),
    ]


def _lenet5_mnist(class_count):
    return [
        L.conv(32, 5), L.relu(), L.maxpool(2),
        L.conv(64, 5), L.relu(), L.maxpool(2),
        L.dense(1024), L.relu(),
        L.dropout(0.5),
        L.softmax_output(class_count),
    ]


def _tiny_synthetic(class_count):
    return [
        L.conv(8, 5), L.relu(), L.maxpool(2),
        L.conv(16, 5), L.relu(), L.maxpool(2),
        L.dense(64), L.relu(),
        L.dropout(0.5),
        L.softmax_output(class_count),
    ]


def _tiny_synthetic_sg(class_count):
    return [
        L.conv(6, 5), L.relu(), L.maxpool(2),
        L.conv(12, 5), L.relu(), L.maxpool(2),
        L.dense(48), L.relu(),
        L.dropout(0.5),
        L.softmax_output(class_count),
    ]


_BUILDERS = {
    "convnet-gtsrb": _convnet_gtsrb,
    "lenet5-gtsrb": _lenet5_gtsrb,
    "lenet5-mnist": _lenet5_mnist,
    "tiny-synthetic": _tiny_synthetic,
    "tiny-synthetic-sg": _tiny_synthetic_sg,
}

ARCHITECTURES = tuple(_BUILDERS)

# canonical input geometry; tiny nets accept any size that survives the
# two conv/pool stages
_CANONICAL_INPUT = {
    "convnet-gtsrb": (32, 32, 3),
    "lenet5-gtsrb": (32, 32, 3),
    "lenet5-mnist": (28, 28, 1),
}


def layer_specs(arch: str, class_count: int):
    if arch not in _BUILDERS:
        raise ArchitectureError(f"unknown architecture {arch!r}")
    return _BUILDERS[arch](class_count)


def build(arch: str, input_shape, class_count: int, rng_seed: int) -> Model:
    """Construct and initialize a named architecture; seeded, deterministic."""
    input_shape = tuple(input_shape)
    canonical = _CANONICAL_INPUT.get(arch)
    if canonical is not None and input_shape != canonical:
        raise ArchitectureError(f"{arch} expects input {canonical}, got {input_shape}")
    specs = layer_specs(arch, class_count)
    try:
        return initialize(specs, input_shape, class_count, rng_seed, input_scale=PIXEL_SCALE)
    except ArchitectureError as e:
        raise ArchitectureError(f"{arch} incompatible with input {input_shape}: {e}") from e
