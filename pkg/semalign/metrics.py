"""
Classification metrics: confusion matrices, accuracy and pairwise confusion rates.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from semalign.exceptions import ContractError, ShapeError, UndefinedRateError
from semalign.model import ModelSnapshot
from semalign.numerics import Matrix


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with true classes on rows and predicted classes on columns."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.counts.shape != (len(self.class_names), len(self.class_names)):
            raise ShapeError("ConfusionMatrix", self.counts.shape, (len(self.class_names),))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        """trace / total."""
        if self.total == 0:
            raise ContractError("accuracy of an empty confusion matrix")
        return float(np.trace(self.counts) / self.total)

    def subset_accuracy(self, class_ids: Sequence[int]) -> float:
        """Accuracy over samples whose true class is in class_ids."""
        ids = list(class_ids)
        rows = self.counts[ids]
        total = int(rows.sum())
        if total == 0:
            raise ContractError(f"no samples for classes {ids}")
        return float(self.counts[ids, ids].sum() / total)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.class_names != other.class_names:
            raise ContractError("cannot merge confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.class_names)


def predict(logits: Matrix) -> np.ndarray:
    """Argmax per row; ties resolve to the lowest class index."""
    return np.argmax(logits, axis=1)


def confusion_from_predictions(
    labels: np.ndarray, predictions: np.ndarray, class_names: Sequence[str]
) -> ConfusionMatrix:
    """Count (true, predicted) pairs over a fixed class list."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ShapeError("confusion", labels.shape, predictions.shape)
    count = len(class_names)
    if labels.size and (labels.min() < 0 or labels.max() >= count):
        raise ContractError(f"labels outside [0, {count})")
    counts = confusion_matrix(labels, predictions, labels=np.arange(count))
    return ConfusionMatrix(counts.astype(np.int64), tuple(class_names))


def evaluate(
    model: ModelSnapshot,
    features: Matrix,
    labels: np.ndarray,
    class_names: Sequence[str],
    embeddings: Matrix | None = None,
) -> tuple[np.ndarray, ConfusionMatrix]:
    """Predict every row of raw features and accumulate the confusion matrix."""
    if features.shape[0] != np.asarray(labels).shape[0]:
        raise ShapeError("evaluate", features.shape, np.asarray(labels).shape)
    predictions = predict(model.logits(features, embeddings))
    return predictions, confusion_from_predictions(labels, predictions, class_names)


def normalize_rows(cm: ConfusionMatrix) -> Matrix:
    """Row-normalized rates; rows without samples stay zero."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


def pair_confusion(cm: ConfusionMatrix, novel_id: int, base_id: int) -> float:
    """Fraction of true novel_id samples predicted as base_id."""
    count = len(cm.class_names)
    if not (0 <= novel_id < count and 0 <= base_id < count):
        raise ContractError(f"class ids ({novel_id}, {base_id}) outside [0, {count})")
    row_total = int(cm.counts[novel_id].sum())
    if row_total == 0:
        raise UndefinedRateError(novel_id)
    return float(cm.counts[novel_id, base_id] / row_total)


def confusion_frame(cm: ConfusionMatrix, normalized: bool = False) -> pd.DataFrame:
    """DataFrame indexed by true class with one column per predicted class."""
    values = normalize_rows(cm) if normalized else cm.counts
    frame = pd.DataFrame(values, index=list(cm.class_names), columns=list(cm.class_names))
    frame.index.name = "true_class"
    return frame


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path, normalized: bool = False) -> None:
    """Counts, or 4-decimal row rates when normalized, as CSV."""
    confusion_frame(cm, normalized).to_csv(
        path, float_format="%.4f" if normalized else None, lineterminator="\n"
    )
