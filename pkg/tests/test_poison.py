"""Injection sets, BIB/BID training loops, and scenario resolution."""

import numpy as np
import pytest

from bdnet import data as D
from bdnet import masks, metrics, poison
from bdnet.errors import EmptySourceError, InjectionSpecError, ScenarioError


def _mask(shape=(32, 32, 3), cm=10.0):
    return masks.generate_static(shape[0], shape[1], shape[2], 2, (0, 0), cm)


def test_injection_spec_validates():
    m = _mask()
    with pytest.raises(InjectionSpecError):
        poison.InjectionSpec(source=1, target=1, mask=m)
    with pytest.raises(InjectionSpecError):
        poison.InjectionSpec(source=0, target=1, mask=m, per_batch=128, batch_size=128)
    with pytest.raises(InjectionSpecError):
        poison.InjectionSpec(source=0, target=1, mask=m, count=-1)


def test_injection_set_all_target_labeled(shape_corpus):
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), count=25)
    inj = poison.build_injection_set(shape_corpus, spec, rng_seed=3)
    assert len(inj) == 25
    assert (inj.labels == 2).all()
    # items are masked class-0 images: undoing the mask recovers pool pixels
    src = shape_corpus.images[shape_corpus.class_indices(0)]
    assert inj.images.max() <= 255


def test_injection_count_zero_gives_empty_set(shape_corpus):
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), count=0)
    inj = poison.build_injection_set(shape_corpus, spec, rng_seed=3)
    assert len(inj) == 0


def test_injection_without_source_class_raises(shape_corpus):
    only_ones = shape_corpus.take(shape_corpus.class_indices(1))
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), count=5)
    with pytest.raises(EmptySourceError):
        poison.build_injection_set(only_ones, spec, rng_seed=3)


def test_injection_ratio_reporting(shape_splits):
    train = D.concat(shape_splits.major, shape_splits.minor)
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), count=30)
    inj = poison.build_injection_set(train, spec, rng_seed=1)
    _, report = poison.train_bib("tiny-synthetic", train, inj, epochs=1, rng_seed=1,
                                 batch_size=64)
    assert report.injection_ratio == pytest.approx(30 / (len(train) + 30))
    assert report.injected_total == 30


def test_bib_same_seed_is_bit_identical(shape_splits):
    train = D.concat(shape_splits.major, shape_splits.minor)
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), count=10)
    inj = poison.build_injection_set(train, spec, rng_seed=5)
    m1, _ = poison.train_bib("tiny-synthetic", train, inj, epochs=2, rng_seed=9,
                             batch_size=64)
    m2, _ = poison.train_bib("tiny-synthetic", train, inj, epochs=2, rng_seed=9,
                             batch_size=64)
    for (_, _, a), (_, _, b) in zip(m1.param_arrays(), m2.param_arrays()):
        np.testing.assert_array_equal(a, b)


def test_bib_zero_mask_equals_clean_training(shape_splits):
    # observational equivalence needs identical batching, so compare against
    # an injection of unmasked source images relabeled... instead: zero-mask
    # poisoning on the same seed twice must match itself, and injecting
    # nothing must match train_clean exactly
    train = D.concat(shape_splits.major, shape_splits.minor)
    empty = train.take([])
    m1, _ = poison.train_bib("tiny-synthetic", train, empty, epochs=2, rng_seed=4,
                             batch_size=64)
    m2, _ = poison.train_clean("tiny-synthetic", train, epochs=2, rng_seed=4,
                               batch_size=64)
    for (_, _, a), (_, _, b) in zip(m1.param_arrays(), m2.param_arrays()):
        np.testing.assert_array_equal(a, b)


def test_bid_stream_and_horizon(shape_splits):
    train = D.concat(shape_splits.major, shape_splits.minor)
    pre, _ = poison.train_clean("tiny-synthetic", train, epochs=1, rng_seed=2,
                                batch_size=64)
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), per_batch=4,
                                batch_size=32, horizon=12)
    model, report = poison.train_bid(pre, train, train, spec, rng_seed=3,
                                     test_set=shape_splits.test, eval_every=6)
    assert report.injected_total == 12 * 4
    assert [e["batch"] for e in report.series] == [6, 12]
    assert report.injection_ratio == pytest.approx(48 / (12 * 32))


def test_bid_injection_stop_supports_decay_observation(shape_splits):
    train = D.concat(shape_splits.major, shape_splits.minor)
    pre, _ = poison.train_clean("tiny-synthetic", train, epochs=1, rng_seed=2,
                                batch_size=64)
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), per_batch=4,
                                batch_size=32, horizon=10)
    _, report = poison.train_bid(pre, train, train, spec, rng_seed=3,
                                 inject_until=5, eval_every=0)
    assert report.injected_total == 5 * 4


def test_bid_per_batch_zero_is_pure_finetuning(shape_splits):
    train = D.concat(shape_splits.major, shape_splits.minor)
    pre, _ = poison.train_clean("tiny-synthetic", train, epochs=1, rng_seed=2,
                                batch_size=64)
    spec = poison.InjectionSpec(source=0, target=2, mask=_mask(), per_batch=0,
                                batch_size=32, horizon=8)
    model, report = poison.train_bid(pre, train, train, spec, rng_seed=3,
                                     test_set=shape_splits.test, eval_every=8)
    assert report.injected_total == 0
    # no poison: attack success stays at natural-confusion level
    assert report.series[-1]["attack_success"] <= 20.0


# -- scenarios ---------------------------------------------------------------


def test_scenario_source_mapping(shape_splits):
    quick = dict(victim_arch="tiny-synthetic", surrogate_arch="tiny-synthetic-sg",
                 epochs=1, batch_size=64, need_mask_model=False)
    r = poison.resolve_scenario("BIB-PKD", shape_splits, 1, **quick)
    assert len(r.victim_train) == len(shape_splits.major) + len(shape_splits.minor)
    assert len(r.injection_pool) == len(r.victim_train)
    assert r.pretrained is None

    r = poison.resolve_scenario("BIB-MK", shape_splits, 1, **quick)
    assert len(r.victim_train) == len(shape_splits.major)
    assert len(r.injection_pool) == len(shape_splits.minor)

    r = poison.resolve_scenario("BID-PKM", shape_splits, 1, **quick)
    # update stream is half of major; pool is the minor set
    assert abs(len(r.victim_train) - len(shape_splits.major) / 2) <= shape_splits.major.class_count
    assert len(r.injection_pool) == len(shape_splits.minor)
    assert r.pretrained is not None

    r = poison.resolve_scenario("BID-FK", shape_splits, 1, **quick)
    d_t = len(shape_splits.major) + len(shape_splits.minor)
    assert abs(len(r.victim_train) - d_t / 2) <= shape_splits.major.class_count
    assert len(r.pretrain_data) + len(r.victim_train) == d_t


def test_bid_fk_mask_model_is_pretrained(shape_splits):
    quick = dict(victim_arch="tiny-synthetic", surrogate_arch="tiny-synthetic-sg",
                 epochs=1, batch_size=64)
    r = poison.resolve_scenario("BID-FK", shape_splits, 1, **quick)
    assert r.mask_model is r.pretrained
    r2 = poison.resolve_scenario("BID-MK", shape_splits, 1, **quick)
    assert r2.mask_model is not r2.pretrained
    # surrogate uses the narrower architecture
    assert r2.mask_model.parameter_count() < r2.pretrained.parameter_count()


def test_unknown_scenario_raises(shape_splits):
    with pytest.raises(ScenarioError):
        poison.resolve_scenario("BIB-FK", shape_splits, 1, victim_arch="tiny-synthetic")
