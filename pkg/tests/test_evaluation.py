import numpy as np
import pytest

from oracles import count_confusion
from wumkit.core import DataError
from wumkit.enrich import features_exit_method
from wumkit.evaluation import (REPORT_COLUMNS, classification_report, confusion_matrix,
                               evaluate_split, format_report, report_csv, stratified_split,
                               weighted_average)


def test_confusion_basics():
    y = np.array([0, 1, 2, 1])
    assert np.array_equal(confusion_matrix(y, y, 3), np.diag([1, 2, 1]))
    zeros = confusion_matrix(y, np.zeros(4, int), 3)
    assert zeros[:, 1:].sum() == 0 and zeros[:, 0].tolist() == [1, 2, 1]
    with pytest.raises(DataError):
        confusion_matrix(y, y[:3], 3)


def test_confusion_matches_counting_oracle():
    rng = np.random.default_rng(0)
    t, p = rng.integers(0, 4, 100), rng.integers(0, 4, 100)
    assert confusion_matrix(t, p, 4).tolist() == count_confusion(t, p, 4)


def test_hand_computed_report():
    r = classification_report([[5, 1, 0], [2, 7, 1], [0, 0, 4]])
    assert r.recall[0] == pytest.approx(5 / 6)
    assert r.precision.tolist() == pytest.approx([5 / 7, 7 / 8, 4 / 5])
    assert r.recall.tolist() == pytest.approx([5 / 6, 0.7, 1.0])
    assert r.accuracy == pytest.approx(16 / 20)
    assert r.weighted["recall"] == pytest.approx(r.accuracy)
    assert r.positive is None


def test_perfect_and_degenerate_reports():
    r = classification_report(np.diag([3, 4]))
    assert r.accuracy == 1.0 and r.positive == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    never = classification_report([[3, 0], [2, 0]])
    assert never.zero_division == ("1",) and never.precision[1] == 0.0
    with pytest.raises(DataError):
        classification_report([[0, 0], [0, 0]])


def test_weighted_f1_of_published_table():
    assert weighted_average([0.93, 0.94, 0.81], [163187, 192866, 10222]) == \
        pytest.approx(0.9319166, abs=1e-7)


def test_stratified_split_proportions():
    labels = np.array([0] * 600 + [1] * 300 + [2] * 100)
    train, test = stratified_split(labels, 0.3, seed=4)
    assert len(test) == 300 and len(train) == 700
    assert np.bincount(labels[test]).tolist() == [180, 90, 30]
    again = stratified_split(labels, 0.3, seed=4)
    assert np.array_equal(test, again[1])
    assert not set(train) & set(test)
    with pytest.raises(DataError):
        stratified_split(np.array([0, 0, 1]), 0.3)


def test_evaluate_and_render(small_sim):
    m = features_exit_method(small_sim[2])
    result = evaluate_split("random_forest", m, 0.3, seed=1,
                            hyperparameters={"n_estimators": 20})
    r = result.report
    assert r.weighted["recall"] == pytest.approx(r.accuracy)
    text = format_report(r)
    assert "Weighted Avg." in text and "Accuracy" in text
    csv = report_csv(r).splitlines()
    assert csv[0] == "Class," + ",".join(REPORT_COLUMNS)
    assert REPORT_COLUMNS == ("Precision", "Recall", "F1 Score", "Support")
    assert csv[-1].startswith("Weighted Avg.,")
    accuracy_row = next(c for c in csv if c.startswith("Accuracy"))
    assert accuracy_row.split(",")[3] == f"{r.weighted['recall']:.4f}"
