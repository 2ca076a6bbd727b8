"""Unit tests for confusion matrices and confusion rates."""

import numpy as np
import pandas as pd
import pytest

from semalign.exceptions import ContractError, ShapeError, UndefinedRateError
from semalign.metrics import (
    ConfusionMatrix,
    confusion_from_predictions,
    normalize_rows,
    pair_confusion,
    predict,
    write_confusion_csv,
)

NAMES = ("a", "b", "c")


def test_confusion_counts_true_rows_predicted_columns():
    """Rows index the true class, columns the prediction."""
    cm = confusion_from_predictions(np.array([0, 0, 1, 2]), np.array([0, 1, 1, 1]), NAMES)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [0, 1, 0]]
    assert cm.total == 4
    assert cm.accuracy == pytest.approx(0.5)


def test_confusion_keeps_absent_classes():
    """Classes never seen still get a row and a column."""
    cm = confusion_from_predictions(np.array([0]), np.array([0]), NAMES)
    assert cm.counts.shape == (3, 3)


def test_confusion_rejects_out_of_range_labels():
    """Labels must index the class list."""
    with pytest.raises(ContractError):
        confusion_from_predictions(np.array([3]), np.array([0]), NAMES)
    with pytest.raises(ShapeError):
        confusion_from_predictions(np.array([0, 1]), np.array([0]), NAMES)


def test_predict_breaks_ties_to_lowest_index():
    """argmax ties go to the lower class id."""
    assert predict(np.array([[0.5, 0.5, 0.1]])).tolist() == [0]


def test_subset_accuracy_and_merge():
    """Accuracy over a subset of true classes; matrices add elementwise."""
    cm = confusion_from_predictions(np.array([0, 1, 2, 2]), np.array([0, 0, 2, 1]), NAMES)
    assert cm.subset_accuracy([2]) == pytest.approx(0.5)
    assert cm.subset_accuracy([0, 1]) == pytest.approx(0.5)
    merged = cm + cm
    assert merged.total == 8
    with pytest.raises(ContractError):
        cm + ConfusionMatrix(np.zeros((2, 2), dtype=np.int64), ("x", "y"))


def test_empty_confusion_accuracy_is_a_contract_error():
    """Accuracy of zero samples is undefined."""
    with pytest.raises(ContractError):
        ConfusionMatrix(np.zeros((3, 3), dtype=np.int64), NAMES).accuracy


def test_pair_confusion_rate_and_undefined_row():
    """Fraction of a class predicted as another; empty rows have no rate."""
    cm = ConfusionMatrix(np.array([[3, 1, 0], [0, 0, 0], [2, 0, 2]]), NAMES)
    assert pair_confusion(cm, 0, 1) == pytest.approx(0.25)
    assert pair_confusion(cm, 2, 0) == pytest.approx(0.5)
    with pytest.raises(UndefinedRateError) as exc_info:
        pair_confusion(cm, 1, 0)
    assert exc_info.value.class_id == 1
    with pytest.raises(ContractError):
        pair_confusion(cm, 0, 5)


def test_normalize_rows_leaves_empty_rows_zero():
    """Row-normalized rates; rows without samples stay zero."""
    cm = ConfusionMatrix(np.array([[3, 1, 0], [0, 0, 0], [2, 0, 2]]), NAMES)
    rates = normalize_rows(cm)
    assert np.allclose(rates[0], [0.75, 0.25, 0.0])
    assert not np.any(rates[1])


def test_write_confusion_csv(tmp_path):
    """Counts and 4-decimal rates are written with class labels."""
    cm = ConfusionMatrix(np.array([[2, 1, 0], [0, 3, 0], [0, 0, 1]]), NAMES)
    counts_path = tmp_path / "cm.csv"
    rates_path = tmp_path / "cm.normalized.csv"
    write_confusion_csv(cm, counts_path)
    write_confusion_csv(cm, rates_path, normalized=True)
    counts = pd.read_csv(counts_path, index_col="true_class")
    assert counts.loc["a", "b"] == 1
    assert rates_path.read_text().splitlines()[1] == "a,0.6667,0.3333,0.0000"
