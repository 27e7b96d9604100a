"""
Test cases for threshold calibration and open-set classification.
"""
import numpy as np
import pytest
import sympy
import torch
from hypothesis import given, settings as hsettings, strategies as st

from forensics import settings
from forensics.openset.thresholds import (UNKNOWN_INDEX, ThresholdTable, classify_from_probs, classify_open_set,
                                          estimate_thresholds, predictions_from_probs, softmax_probs,
                                          thresholds_from_scores)
from forensics.representation.model import ModelStack


def _one_class_scores(values):
    """Every row predicted and labelled as class 0 with the given confidence"""
    values = np.asarray(values, dtype=np.float64)
    probs = np.stack([values, 1.0 - values], axis=1)
    return probs, np.zeros(len(values), dtype=np.int64)


def test_softmax_matches_direct_evaluation():
    got = softmax_probs([1.0, 2.0, 3.0])
    e = [sympy.exp(k) for k in (1, 2, 3)]
    expected = [float(v / sum(e)) for v in e]
    assert got == pytest.approx(expected, rel=1e-12)
    assert softmax_probs([0.0, 0.0, 0.0]) == pytest.approx([1 / 3] * 3)


def test_softmax_is_shift_invariant_and_stable():
    logits = np.array([[1.0, -2.0, 0.5], [1000.0, 1001.0, 999.0]])
    assert softmax_probs(logits + 37.0) == pytest.approx(softmax_probs(logits))
    assert np.all(np.isfinite(softmax_probs(logits)))
    assert softmax_probs(torch.tensor([0.0, 0.0])) == pytest.approx([0.5, 0.5])
    with pytest.raises(ValueError):
        softmax_probs([np.nan, 1.0])


def test_lower_nearest_rank_percentile():
    probs, labels = _one_class_scores([0.9, 0.8, 0.7, 0.6])
    assert thresholds_from_scores(probs, labels, ("A", "B"), 0.0).epsilon["A"] == pytest.approx(0.6)
    assert thresholds_from_scores(probs, labels, ("A", "B"), 50.0).epsilon["A"] == pytest.approx(0.7)


def test_class_without_correct_predictions_rejects_everything(caplog):
    probs, labels = _one_class_scores([0.9, 0.8])
    table = thresholds_from_scores(probs, labels, ("A", "B"), 5.0)
    assert table.epsilon["B"] == 1.0
    assert table.support_counts == {"A": 2, "B": 0}
    assert "no correctly classified" in caplog.text


def test_perfect_confidence_is_still_accepted():
    """A threshold of exactly 1.0 accepts a score of exactly 1.0"""
    probs, labels = _one_class_scores([1.0, 1.0, 1.0])
    table = thresholds_from_scores(probs, labels, ("A", "B"), 0.0)
    assert table.epsilon["A"] == 1.0
    assert list(classify_from_probs(probs, table.vector(("A", "B")))) == [0, 0, 0]


def test_worked_classification_examples():
    eps = [0.6, 0.6, 0.6]
    assert list(classify_from_probs([[0.7, 0.2, 0.1]], eps)) == [0]
    assert list(classify_from_probs([[0.4, 0.35, 0.25]], eps)) == [UNKNOWN_INDEX]
    predictions = predictions_from_probs([[0.4, 0.35, 0.25]], ThresholdTable({"A": .6, "B": .6, "C": .6}, 5.0),
                                         ("A", "B", "C"))
    assert predictions[0].is_unknown
    assert predictions[0].max_score == pytest.approx(0.4)


def test_acceptance_uses_argmax_even_if_another_class_passed():
    """Class B passes its low threshold, the argmax A is still the label"""
    assert list(classify_from_probs([[0.5, 0.3, 0.2]], [0.9, 0.2, 0.9])) == [0]


@hsettings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_acceptance_set_shrinks_as_thresholds_rise(seed):
    r = np.random.default_rng(seed)
    probs = r.dirichlet(np.ones(4), size=200)
    low = r.uniform(0.1, 0.6, size=4)
    high = low + r.uniform(0.0, 0.4, size=4)
    accepted_low = classify_from_probs(probs, low) != UNKNOWN_INDEX
    accepted_high = classify_from_probs(probs, high) != UNKNOWN_INDEX
    assert np.all(accepted_low | ~accepted_high)


def test_unknown_set_grows_with_lambda():
    r = np.random.default_rng(0)
    probs = r.dirichlet(np.ones(3) * 0.5, size=300)
    labels = probs.argmax(axis=1)
    names = ("A", "B", "C")
    previous = np.zeros(len(probs), dtype=bool)
    for lam in settings.LAMBDA_SWEEP:
        table = thresholds_from_scores(probs, labels, names, lam)
        rejected = classify_from_probs(probs, table.vector(names)) == UNKNOWN_INDEX
        assert np.all(rejected | ~previous)
        previous = rejected
    zero = thresholds_from_scores(probs, labels, names, 0.0)
    assert not np.any(classify_from_probs(probs, zero.vector(names)) == UNKNOWN_INDEX)


def test_table_validation_and_persistence(tmp_path):
    table = ThresholdTable({"REAL": 0.7, "M1": 0.5}, 5.0, {"REAL": 10, "M1": 4})
    loaded = ThresholdTable.load(table.save(tmp_path / "thresholds.json"))
    assert loaded.epsilon == table.epsilon
    assert loaded.support_counts == table.support_counts
    with pytest.raises(ValueError, match="M2"):
        table.vector(("REAL", "M2"))
    with pytest.raises(ValueError):
        ThresholdTable({"A": 1.2}, 5.0)
    with pytest.raises(ValueError):
        ThresholdTable({"A": 0.5}, 101.0)
    with pytest.raises(ValueError):
        classify_from_probs([[0.5, 0.5]], [0.5])


def test_estimate_and_classify_with_a_model(sample_factory):
    torch.manual_seed(0)
    stack = ModelStack(num_classes=2, class_names=("REAL", "M1"))
    samples = [sample_factory("REAL", f"{i:03d}", seed=i) for i in range(6)] + \
              [sample_factory("M1", f"{i:03d}", seed=10 + i) for i in range(6)]
    table = estimate_thresholds(stack, samples, 0.0)
    assert set(table.epsilon) == {"REAL", "M1"}
    assert sum(table.support_counts.values()) <= len(samples)
    single = classify_open_set(stack, samples[0].image, table)
    assert single.softmax.sum() == pytest.approx(1.0)
    batch = classify_open_set(stack, np.stack([s.image for s in samples]), table)
    assert len(batch) == len(samples)
    with pytest.raises(ValueError, match="outside the known classes"):
        estimate_thresholds(stack, [sample_factory("M2")], 5.0)
