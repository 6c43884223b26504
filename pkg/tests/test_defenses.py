"""Noise and blur defenses, the defense harness, class histograms."""

import numpy as np
import pytest

from bdnet import masks
from bdnet.data import LabeledDataset
from bdnet.defenses import (DefenseSpec, class_histogram, default_sigma, defend,
                            evaluate_defense)
from bdnet.errors import EmptyEvaluationError


def test_noise_zero_range_is_identity(rng):
    img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    out = defend(img, DefenseSpec(kind="noise", noise_range=0, seed=1))
    np.testing.assert_array_equal(out, img)


def test_noise_is_seed_reproducible_and_bounded(rng):
    img = rng.integers(0, 256, (16, 16, 1)).astype(np.uint8)
    spec = DefenseSpec(kind="noise", noise_range=20, seed=7)
    a = defend(img, spec)
    b = defend(img, spec)
    np.testing.assert_array_equal(a, b)
    assert (np.abs(a.astype(int) - img.astype(int)) <= 20).all()
    c = defend(img, DefenseSpec(kind="noise", noise_range=20, seed=8))
    assert (a != c).any()


def test_blur_preserves_constant_images():
    img = np.full((10, 10, 3), 77, dtype=np.uint8)
    out = defend(img, DefenseSpec(kind="blur"))
    np.testing.assert_array_equal(out, img)


def test_gaussian_kernel_normalized():
    k = DefenseSpec(kind="blur", kernel_size=5).kernel()
    assert k.shape == (5, 5)
    assert k.sum() == pytest.approx(1.0, abs=1e-9)
    assert default_sigma(5) == pytest.approx(1.1)


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        DefenseSpec(kind="blur", kernel_size=4)
    with pytest.raises(ValueError):
        DefenseSpec(kind="what")


def test_defend_output_always_in_range(rng):
    img = rng.integers(0, 256, (12, 12, 3)).astype(np.uint8)
    for spec in (DefenseSpec(kind="noise", noise_range=40, seed=3),
                 DefenseSpec(kind="blur", kernel_size=5)):
        out = defend(img, spec)
        assert out.dtype == np.uint8


def test_none_defense_passes_through(rng):
    img = rng.integers(0, 256, (8, 8, 1)).astype(np.uint8)
    np.testing.assert_array_equal(defend(img, DefenseSpec(kind="none")), img)


def test_evaluate_defense_none_matches_undefended(rng):
    from bdnet.nn import layers as L
    from bdnet.nn.model import initialize
    model = initialize([L.softmax_output(3)], (8, 8, 1), 3, 0)
    model.params[0]["b"][1] = 5.0
    ds = LabeledDataset(rng.integers(0, 256, (15, 8, 8, 1)).astype(np.uint8),
                        rng.integers(0, 3, 15), 3)
    if not len(ds.class_indices(0)):
        ds.labels[0] = 0
    rep = evaluate_defense(model, ds, masks.zero_mask(8, 8, 1), (0, 1),
                           DefenseSpec(kind="none"))
    assert rep.defended_success == rep.undefended_success
    assert rep.defended_accuracy == rep.undefended_accuracy
    assert rep.success_drop == 0.0
    assert rep.accuracy_cost == 0.0


def test_class_histogram_counts():
    ds = LabeledDataset(np.zeros((100, 4, 4, 1), np.uint8),
                        np.repeat(np.arange(10), 10), 10)
    np.testing.assert_array_equal(class_histogram(ds), [10] * 10)


def test_class_histogram_shows_injection_surplus():
    labels = np.concatenate([np.repeat(np.arange(4), 25), np.full(7, 2)])
    ds = LabeledDataset(np.zeros((107, 4, 4, 1), np.uint8), labels, 4)
    counts = class_histogram(ds)
    assert counts[2] - 25 == 7


def test_class_histogram_reports_empty_classes():
    ds = LabeledDataset(np.zeros((5, 4, 4, 1), np.uint8), np.zeros(5, np.int64), 3)
    np.testing.assert_array_equal(class_histogram(ds), [5, 0, 0])
    with pytest.raises(EmptyEvaluationError):
        class_histogram(ds.take([]))
