"""Architecture constructors: shapes, parameter counts, determinism."""

import numpy as np
import pytest

from bdnet import zoo
from bdnet.errors import ArchitectureError
from bdnet.nn import layers as L
from bdnet.nn.model import forward

# pinned so accidental architecture edits fail loudly
EXPECTED_PARAM_COUNTS = {
    ("convnet-gtsrb", (32, 32, 3), 43): 197_715,
    ("lenet5-gtsrb", (32, 32, 3), 43): 64_811,
    ("lenet5-mnist", (28, 28, 1), 10): 1_111_946,
    ("tiny-synthetic", (32, 32, 3), 8): 30_008,
    ("tiny-synthetic-sg", (32, 32, 3), 8): 17_108,
}


@pytest.mark.parametrize("arch,shape,nc", sorted(EXPECTED_PARAM_COUNTS))
def test_parameter_counts_pinned(arch, shape, nc):
    model = zoo.build(arch, shape, nc, 0)
    assert model.parameter_count() == EXPECTED_PARAM_COUNTS[(arch, shape, nc)]


def test_lenet5_mnist_output_is_ten_logits(rng):
    model = zoo.build("lenet5-mnist", (28, 28, 1), 10, 0)
    logits, _ = forward(model, rng.integers(0, 256, (28, 28, 1)).astype(np.float32))
    assert logits.shape == (10,)


def test_convnet_gtsrb_has_concat_skip_and_43_logits(rng):
    model = zoo.build("convnet-gtsrb", (32, 32, 3), 43, 0)
    kinds = [s.kind for s in model.arch]
    assert L.CONCAT_SKIP in kinds
    src = model.arch[kinds.index(L.CONCAT_SKIP)].source
    assert model.arch[src].kind == L.MAXPOOL
    logits, _ = forward(model, rng.integers(0, 256, (32, 32, 3)).astype(np.float32))
    assert logits.shape == (43,)
    # concatenated head: 400 pooled + 400 conv features
    assert model.params[-1]["w"].shape == (800, 43)


def test_shapes_chain_to_class_count():
    for (arch, shape, nc) in EXPECTED_PARAM_COUNTS:
        model = zoo.build(arch, shape, nc, 0)
        assert model.shapes[-1] == (nc,)


def test_same_seed_gives_bit_identical_parameters():
    a = zoo.build("lenet5-gtsrb", (32, 32, 3), 43, 123)
    b = zoo.build("lenet5-gtsrb", (32, 32, 3), 43, 123)
    for (_, _, pa), (_, _, pb) in zip(a.param_arrays(), b.param_arrays()):
        np.testing.assert_array_equal(pa, pb)
    c = zoo.build("lenet5-gtsrb", (32, 32, 3), 43, 124)
    assert any((pa != pc).any() for (_, _, pa), (_, _, pc)
               in zip(a.param_arrays(), c.param_arrays()))


def test_incompatible_input_shape_raises():
    with pytest.raises(ArchitectureError):
        zoo.build("lenet5-mnist", (32, 32, 3), 10, 0)
    with pytest.raises(ArchitectureError):
        zoo.build("tiny-synthetic", (6, 6, 3), 4, 0)  # too small to survive pooling


def test_unknown_architecture_raises():
    with pytest.raises(ArchitectureError):
        zoo.build("vgg-16", (32, 32, 3), 10, 0)
