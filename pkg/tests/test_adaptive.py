"""Targeted boundary-walk perturbations and universal mask construction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdnet.adaptive import (DeepFoolParams, UniversalParams, build_universal_mask,
                            project_linf, targeted_deepfool)
from bdnet.errors import EmptyInputError
from bdnet.nn import layers as L
from bdnet.nn.model import forward, initialize


def _linear_model(weights, nc):
    d = weights.shape[0]
    model = initialize([L.softmax_output(nc)], (1, 1, d), nc, 0, dtype=np.float64)
    model.params[0]["w"][:] = weights
    model.params[0]["b"][:] = 0.0
    return model


def test_linear_binary_matches_hyperplane_projection(rng):
    w = rng.normal(size=(4, 2))
    model = _linear_model(w, 2)
    x = rng.normal(size=(1, 1, 4)) * 5.0
    logits, _ = forward(model, x)
    c = int(logits.argmax())
    t = 1 - c
    eta = 0.02
    v = targeted_deepfool(model, x, DeepFoolParams(target=t, source=c, overshoot=eta))
    diff = w[:, t] - w[:, c]
    expected = (1 + eta) * (abs(float(logits[t] - logits[c])) / (diff @ diff)) * diff
    np.testing.assert_allclose(v.ravel(), expected, rtol=1e-6)
    after, _ = forward(model, x + v)
    assert int(after.argmax()) == t


def test_already_target_class_returns_zero(rng):
    w = rng.normal(size=(3, 2))
    model = _linear_model(w, 2)
    x = rng.normal(size=(1, 1, 3))
    logits, _ = forward(model, x)
    t = int(logits.argmax())
    v = targeted_deepfool(model, x, DeepFoolParams(target=t, source=1 - t))
    assert not v.any()


def test_first_step_parallel_to_gradient_difference(rng):
    w = rng.normal(size=(5, 3))
    model = _linear_model(w, 3)
    x = rng.normal(size=(1, 1, 5)) * 3.0
    logits, _ = forward(model, x)
    c = int(logits.argmax())
    t = (c + 1) % 3
    v = targeted_deepfool(model, x, DeepFoolParams(target=t, source=c, max_iter=1))
    diff = (w[:, t] - w[:, c])
    cos = (v.ravel() @ diff) / (np.linalg.norm(v) * np.linalg.norm(diff))
    assert cos == pytest.approx(1.0, abs=1e-9)


def test_deepfool_params_validate():
    with pytest.raises(ValueError):
        DeepFoolParams(target=1, source=1)
    with pytest.raises(ValueError):
        DeepFoolParams(target=1, source=0, max_iter=0)
    with pytest.raises(ValueError):
        UniversalParams(xi=-1.0, deepfool=DeepFoolParams(target=1, source=0))


# -- l-infinity projection ---------------------------------------------------


def test_project_linf_examples():
    np.testing.assert_array_equal(project_linf(np.array([15.0, -3.0]), 10.0), [10.0, -3.0])
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(project_linf(v, 5.0), v)
    np.testing.assert_array_equal(project_linf(np.array([3.0, -4.0]), 0.0), [0.0, 0.0])


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=20),
       st.floats(0, 50))
@settings(max_examples=80, deadline=None)
def test_project_linf_idempotent_and_bounded(values, xi):
    v = np.array(values)
    p = project_linf(v, xi)
    assert np.abs(p).max() <= xi + 1e-12
    np.testing.assert_array_equal(project_linf(p, xi), p)
    # projection never increases any coordinate's magnitude
    assert (np.abs(p) <= np.abs(v) + 1e-12).all()


# -- universal masks ---------------------------------------------------------


def test_zero_budget_gives_zero_mask(rng):
    w = rng.normal(size=(4, 2))
    model = _linear_model(w, 2)
    samples = rng.normal(size=(5, 1, 1, 4))
    params = UniversalParams(xi=0.0, passes=3,
                             deepfool=DeepFoolParams(target=1, source=0))
    mask = build_universal_mask(model, samples, params)
    assert not mask.values.any()
    assert mask.max_intensity == 0.0


def test_empty_samples_raise(rng):
    model = _linear_model(rng.normal(size=(4, 2)), 2)
    params = UniversalParams(xi=1.0, deepfool=DeepFoolParams(target=1, source=0))
    with pytest.raises(EmptyInputError):
        build_universal_mask(model, np.zeros((0, 1, 1, 4)), params)


def test_unconstrained_single_sample_reaches_target(shape_splits):
    from bdnet import poison
    from bdnet.data import concat
    train = concat(shape_splits.major, shape_splits.minor)
    model, _ = poison.train_clean("tiny-synthetic", train, epochs=3, rng_seed=5,
                                  batch_size=64)
    src_images = shape_splits.test.images[shape_splits.test.class_indices(0)]
    x = src_images[0].astype(np.float64)
    params = UniversalParams(xi=1e9, passes=10,
                             deepfool=DeepFoolParams(target=2, source=0))
    mask = build_universal_mask(model, x[None], params)
    logits, _ = forward(model, x + mask.values)
    assert int(logits.argmax()) == 2


def test_universal_mask_respects_budget_exactly(shape_splits, rng):
    from bdnet import poison
    from bdnet.data import concat
    train = concat(shape_splits.major, shape_splits.minor)
    model, _ = poison.train_clean("tiny-synthetic", train, epochs=2, rng_seed=6,
                                  batch_size=64)
    idx = train.class_indices(1)[:12]
    samples = train.images[idx].astype(np.float64)
    params = UniversalParams(xi=6.0, passes=3,
                             deepfool=DeepFoolParams(target=3, source=1))
    mask = build_universal_mask(model, samples, params)
    assert np.abs(mask.values).max() <= 6.0 + 1e-6
    assert mask.kind == "adaptive"
    assert mask.params["xi"] == 6.0
