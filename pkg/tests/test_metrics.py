"""Attack metrics, perceptual hash, spectral statistics, report rendering."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdnet import masks, metrics, zoo
from bdnet.data import LabeledDataset
from bdnet.errors import EmptyEvaluationError, EmptyInputError
from bdnet.metrics import (ExperimentReport, accuracy, accuracy_loss,
                           attack_success_rate, averaged_row, high_freq_stats,
                           phash64, phash_similarity, render_csv)


def _constant_model(nc, winner, shape=(8, 8, 1)):
    from bdnet.nn import layers as L
    from bdnet.nn.model import initialize
    model = initialize([L.softmax_output(nc)], shape, nc, 0)
    model.params[0]["w"][:] = 0.0
    model.params[0]["b"][:] = 0.0
    model.params[0]["b"][winner] = 10.0
    return model


def _dataset(rng, n=20, nc=4, shape=(8, 8, 1)):
    return LabeledDataset(rng.integers(0, 256, size=(n,) + shape).astype(np.uint8),
                          rng.integers(0, nc, size=n), nc)


def test_constant_target_model_scores_100(rng):
    ds = _dataset(rng)
    model = _constant_model(4, winner=2)
    rate = attack_success_rate(model, ds, masks.zero_mask(8, 8, 1), c=0, t=2)
    assert rate == 100.0


def test_success_rate_counts_exactly(rng):
    ds = _dataset(rng, n=40)
    model = _constant_model(4, winner=1)
    rate = attack_success_rate(model, ds, masks.zero_mask(8, 8, 1), c=3, t=2)
    assert rate == 0.0


def test_success_rate_needs_source_class(rng):
    ds = LabeledDataset(rng.integers(0, 256, (5, 8, 8, 1)).astype(np.uint8),
                        np.zeros(5, dtype=np.int64), 4)
    with pytest.raises(EmptyEvaluationError):
        attack_success_rate(_constant_model(4, 1), ds, masks.zero_mask(8, 8, 1), c=2, t=1)


def test_accuracy_and_loss(rng):
    ds = _dataset(rng, n=30)
    perfect_share = float((ds.labels == 1).mean()) * 100
    model = _constant_model(4, winner=1)
    assert accuracy(model, ds) == pytest.approx(perfect_share)
    assert accuracy_loss(98.0, 97.5) == pytest.approx(0.5)
    assert accuracy_loss(100.0, 0.0) == 100.0
    with pytest.raises(EmptyEvaluationError):
        accuracy(model, ds.take([]))


# -- perceptual hash --------------------------------------------------------


def test_phash_is_64_bits(rng):
    img = rng.integers(0, 256, (28, 28, 1)).astype(np.uint8)
    h = phash64(img)
    assert 0 <= h < 2 ** 64


def test_phash_similarity_identity_and_extremes(rng):
    img = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
    assert phash_similarity(img, img) == 100.0
    assert phash_similarity(0, 2 ** 64 - 1) == 0.0
    assert phash_similarity(0x5A5A, 0x5A5A) == 100.0


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 64 - 1))
@settings(max_examples=60, deadline=None)
def test_phash_similarity_symmetric(a, b):
    assert phash_similarity(a, b) == phash_similarity(b, a)
    if phash_similarity(a, b) == 100.0:
        assert a == b


def test_phash_brightness_shift_invariance():
    # small uniform shifts only move the DC coefficient, which the median
    # (computed over the other 63) ignores
    rng = np.random.default_rng(500)
    same = 0
    total = 500
    for _ in range(total):
        img = rng.integers(10, 240, (20, 20, 1)).astype(np.uint8)
        shifted = np.clip(img.astype(np.int64) + rng.choice([-1, 1]), 0, 255).astype(np.uint8)
        same += phash64(img) == phash64(shifted)
    assert same / total >= 0.99


def test_phash_static_mask_similarity_high(rng):
    img = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
    m = masks.generate_static(32, 32, 3, 2, (0, 0), 10.0)
    assert phash_similarity(img, masks.apply(img, m)) >= 97.0


# -- spectral statistics ----------------------------------------------------


def test_high_freq_stats_zero_image_is_exactly_zero():
    mean, std = high_freq_stats([np.zeros((16, 16, 1))])
    assert mean == 0.0 and std == 0.0


def test_high_freq_stats_centered_impulse_closed_form():
    h = w = 24
    amp = 200.0
    img = np.zeros((h, w, 1))
    img[h // 2, w // 2, 0] = amp
    side = math.ceil(0.25 * min(h, w))
    expected = amp * math.sqrt(h * w - side * side)
    mean, std = high_freq_stats([img], 0.25)
    assert mean == pytest.approx(expected, abs=1e-9)
    assert std == pytest.approx(0.0, abs=1e-9)


def test_high_freq_stats_usable_on_masks():
    m = masks.generate_static(32, 32, 3, 2, (0, 0), 10.0)
    mean, std = high_freq_stats([m.values])
    assert mean > 0.0
    assert std == 0.0


def test_high_freq_stats_empty_raises():
    with pytest.raises(EmptyInputError):
        high_freq_stats([])


# -- reports ----------------------------------------------------------------


def _report(pair=(0, 2), success=90.0, seed=1):
    return ExperimentReport(scenario="BIB-PKD", mask_kind="static", intensity=10.0,
                            pair=pair, injection=100, success_rate=success,
                            accuracy=97.0, baseline_accuracy=98.0,
                            accuracy_loss=1.0, seed=seed)


def test_report_validates_percentages():
    with pytest.raises(ValueError):
        _report(success=101.0)


def test_csv_has_fixed_columns_and_avg_row():
    reports = [_report(pair=(0, 2)), _report(pair=(1, 3), success=70.0)]
    rows = [r.csv_row() for r in reports] + [averaged_row(reports)]
    text = render_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == ("scenario,mask_kind,c_m_or_xi,pair,injection,success_rate,"
                       "accuracy_loss,phash_sim,hf_mean,hf_stdev,seed")
    assert len(lines) == 4
    assert lines[3].split(",")[3] == "avg"
    assert lines[3].split(",")[5] == "80"


def test_integer_counting_is_exact(rng):
    # 1 of 3 correct must render as a clean percentage, no float drift
    images = rng.integers(0, 256, (3, 8, 8, 1)).astype(np.uint8)
    ds = LabeledDataset(images, np.array([1, 0, 0]), 4)
    model = _constant_model(4, winner=1)
    assert accuracy(model, ds) == pytest.approx(100.0 / 3.0)
