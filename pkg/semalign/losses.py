"""
Cross-entropy and the semantic-aware max-margin loss.

The margin loss adds margin_scale * m[y, j] to every competitor logit j of a
sample labelled y and then applies cross-entropy, so similar classes must be
beaten by a wider gap.
"""

from dataclasses import dataclass

import numpy as np

from semalign.embeddings import MarginMatrix
from semalign.exceptions import ConfigError, ContractError, ShapeError
from semalign.numerics import Matrix, log_softmax_rows, softmax_rows


@dataclass(frozen=True)
class LossOutput:
    """Batch-mean loss and its gradient with respect to the input logits."""

    value: float
    grad_logits: Matrix


@dataclass(frozen=True)
class SamConfig:
    margins: MarginMatrix
    margin_scale: float

    def __post_init__(self) -> None:
        if self.margin_scale <= 0:
            raise ConfigError(f"margin_scale must be positive, got {self.margin_scale}")


def _check_labels(logits: Matrix, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("loss", logits.shape, labels.shape)
    if logits.shape[0] == 0:
        raise ContractError("loss over an empty batch")
    bad = np.flatnonzero((labels < 0) | (labels >= logits.shape[1]))
    if bad.size:
        raise ContractError(
            f"label {int(labels[bad[0]])} at row {int(bad[0])} outside [0, {logits.shape[1]})"
        )
    return labels


def cross_entropy(logits: Matrix, labels: np.ndarray) -> LossOutput:
    """Mean of -log softmax(logits)[n, y_n]; gradient (softmax - onehot) / N."""
    labels = _check_labels(logits, labels)
    rows = np.arange(logits.shape[0])
    count = logits.shape[0]
    value = float(-np.sum(log_softmax_rows(logits)[rows, labels]) / count)
    grad = softmax_rows(logits)
    grad[rows, labels] -= 1.0
    return LossOutput(value=value, grad_logits=grad / count)


def margin_augmented_logits(logits: Matrix, labels: np.ndarray, cfg: SamConfig) -> Matrix:
    """Competitor logits raised by margin_scale * m[y, j]; the diagonal keeps targets fixed."""
    labels = _check_labels(logits, labels)
    if cfg.margins.values.shape != (logits.shape[1], logits.shape[1]):
        raise ShapeError("sam_loss margins", cfg.margins.values.shape, logits.shape)
    return logits + cfg.margin_scale * cfg.margins.values[labels]


def sam_loss(logits: Matrix, labels: np.ndarray, cfg: SamConfig) -> LossOutput:
    """
    Semantic-aware max-margin loss. The augmentation is additive and constant
    in the logits, so its gradient equals the cross-entropy gradient taken at
    the augmented logits.
    """
    return cross_entropy(margin_augmented_logits(logits, labels, cfg), labels)
