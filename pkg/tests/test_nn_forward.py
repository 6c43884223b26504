"""Forward-pass contracts: softmax behavior, determinism, shape errors."""

import numpy as np
import pytest

from bdnet import zoo
from bdnet.errors import ClassIndexError, EmptyBatchError, ShapeError
from bdnet.nn import layers as L
from bdnet.nn.model import (class_score_input_gradient, forward, initialize,
                            loss_and_param_gradients)


def test_zero_weights_give_uniform_probabilities(rng):
    model = zoo.build("tiny-synthetic", (32, 32, 3), 8, 0)
    for p in model.params:
        for arr in p.values():
            arr[:] = 0.0
    x = rng.integers(0, 256, size=(32, 32, 3)).astype(np.float32)
    _, probs = forward(model, x)
    np.testing.assert_allclose(probs, 1 / 8, atol=1e-7)


def test_lenet5_mnist_emits_ten_logits(rng):
    model = zoo.build("lenet5-mnist", (28, 28, 1), 10, 0)
    x = rng.integers(0, 256, size=(28, 28, 1)).astype(np.float32)
    logits, probs = forward(model, x)
    assert logits.shape == (10,)
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)


def test_identity_dense_layer_passes_input_through():
    model = initialize([L.softmax_output(3)], (1, 1, 3), 3, 0, dtype=np.float64)
    model.params[0]["w"][:] = np.eye(3)
    model.params[0]["b"][:] = 0.0
    logits, _ = forward(model, np.array([3.0, 1.0, -2.0]).reshape(1, 1, 3))
    np.testing.assert_allclose(logits, [3.0, 1.0, -2.0])


def test_probabilities_sum_to_one_for_batches(rng):
    model = zoo.build("tiny-synthetic", (32, 32, 3), 5, 3)
    xb = rng.integers(0, 256, size=(9, 32, 32, 3)).astype(np.float32)
    logits, probs = forward(model, xb)
    assert logits.shape == (9, 5)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert ((probs > 0) & (probs < 1)).all()


def test_eval_forward_is_bitwise_deterministic(rng):
    model = zoo.build("tiny-synthetic", (32, 32, 3), 5, 3)
    x = rng.integers(0, 256, size=(32, 32, 3)).astype(np.float32)
    a, _ = forward(model, x)
    b, _ = forward(model, x)
    assert (a == b).all()


def test_train_mode_dropout_is_seed_reproducible(rng):
    model = zoo.build("tiny-synthetic", (32, 32, 3), 5, 3)
    x = rng.integers(0, 256, size=(32, 32, 3)).astype(np.float32)
    a, _ = forward(model, x, train_mode=True, rng_seed=9)
    b, _ = forward(model, x, train_mode=True, rng_seed=9)
    c, _ = forward(model, x, train_mode=True, rng_seed=10)
    assert (a == b).all()
    assert not (a == c).all()


def test_input_shape_mismatch_raises(rng):
    model = zoo.build("lenet5-mnist", (28, 28, 1), 10, 0)
    with pytest.raises(ShapeError):
        forward(model, rng.integers(0, 256, size=(32, 32, 3)).astype(np.float32))


def test_empty_batch_raises():
    model = zoo.build("tiny-synthetic", (32, 32, 3), 5, 3)
    with pytest.raises(EmptyBatchError):
        loss_and_param_gradients(model, [])


def test_class_index_out_of_range_raises(rng):
    model = zoo.build("tiny-synthetic", (32, 32, 3), 5, 3)
    x = rng.integers(0, 256, size=(32, 32, 3)).astype(np.float32)
    with pytest.raises(ClassIndexError):
        class_score_input_gradient(model, x, 5)


def test_linear_model_input_gradient_is_weight_row():
    model = initialize([L.softmax_output(4)], (1, 1, 3), 4, 1, dtype=np.float64)
    g = class_score_input_gradient(model, np.zeros((1, 1, 3)), 2)
    np.testing.assert_allclose(g.ravel(), model.params[0]["w"][:, 2])


def test_self_difference_of_class_gradients_is_zero(rng):
    model = zoo.build("tiny-synthetic", (32, 32, 3), 5, 3)
    x = rng.integers(0, 256, size=(32, 32, 3)).astype(np.float32)
    g = class_score_input_gradient(model, x, 3)
    np.testing.assert_array_equal(g - g, np.zeros_like(g))
