"""Unit tests for cross-entropy and the semantic-aware margin loss."""

import math

import numpy as np
import pytest

from semalign.embeddings import MarginMatrix, margin_matrix
from semalign.exceptions import ConfigError, ContractError, ShapeError
from semalign.losses import SamConfig, cross_entropy, margin_augmented_logits, sam_loss
from semalign.numerics import grad_check, make_rng


def _margins(values) -> MarginMatrix:
    return MarginMatrix(values=np.asarray(values, dtype=np.float64), gamma=0.0, k=None)


def _naive_cross_entropy(logits, labels) -> float:
    total = 0.0
    for row, label in zip(logits, labels):
        top = max(row)
        log_z = top + math.log(sum(math.exp(x - top) for x in row))
        total += log_z - row[label]
    return total / len(labels)


def test_cross_entropy_two_class_closed_form():
    """CE of logits [1, 0] with label 0 is ln(1 + e^-1)."""
    out = cross_entropy(np.array([[1.0, 0.0]]), np.array([0]))
    assert out.value == pytest.approx(math.log1p(math.exp(-1.0)), abs=1e-12)
    assert out.value == pytest.approx(0.3133, abs=1e-4)


def test_cross_entropy_gradient_properties(rng):
    """Rows sum to zero and the target entry is non-positive."""
    logits = rng.standard_normal((6, 4))
    labels = rng.integers(0, 4, size=6)
    grad = cross_entropy(logits, labels).grad_logits
    assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-12)
    assert np.all(grad[np.arange(6), labels] <= 0.0)


def test_cross_entropy_matches_naive_and_finite_differences(rng):
    """Value matches a per-row reference; gradient matches central differences."""
    logits = rng.standard_normal((4, 5))
    labels = rng.integers(0, 5, size=4)
    out = cross_entropy(logits, labels)
    assert out.value == pytest.approx(_naive_cross_entropy(logits, labels), abs=1e-12)
    err = grad_check(lambda ps: cross_entropy(ps[0], labels).value, [logits], [out.grad_logits])
    assert err < 1e-7


def test_cross_entropy_is_shift_invariant(rng):
    """Adding a constant per row leaves the loss unchanged."""
    logits = rng.standard_normal((3, 4))
    labels = np.array([0, 2, 3])
    shifted = logits + rng.standard_normal((3, 1)) * 50
    assert cross_entropy(shifted, labels).value == pytest.approx(
        cross_entropy(logits, labels).value, abs=1e-10
    )


@pytest.mark.parametrize("labels", [[0, 4], [-1, 0]])
def test_cross_entropy_rejects_out_of_range_labels(labels):
    """Labels outside [0, C) are a contract violation."""
    with pytest.raises(ContractError):
        cross_entropy(np.zeros((2, 4)), np.array(labels))


def test_cross_entropy_rejects_label_count_mismatch():
    """One label per row is required."""
    with pytest.raises(ShapeError):
        cross_entropy(np.zeros((2, 4)), np.array([0]))


def test_sam_loss_closed_form():
    """Margin 0.6 on the competitor raises the loss to ln(1 + e^-0.4)."""
    cfg = SamConfig(_margins([[0.0, 0.6], [0.6, 0.0]]), margin_scale=1.0)
    logits, labels = np.array([[1.0, 0.0]]), np.array([0])
    out = sam_loss(logits, labels, cfg)
    assert out.value == pytest.approx(math.log1p(math.exp(-0.4)), abs=1e-12)
    assert out.value == pytest.approx(0.5130, abs=1e-4)
    assert out.value > cross_entropy(logits, labels).value


def test_sam_loss_with_zero_margins_equals_cross_entropy():
    """Zero margins (high gamma or k=0) reduce SAM to CE on random instances."""
    for trial in range(1000):
        rng = make_rng(trial, 21)
        n, c = int(rng.integers(1, 5)), int(rng.integers(2, 7))
        logits = rng.standard_normal((n, c)) * 3
        labels = rng.integers(0, c, size=n)
        zero = _margins(np.zeros((c, c)))
        sam = sam_loss(logits, labels, SamConfig(zero, margin_scale=float(rng.uniform(0.5, 20))))
        ce = cross_entropy(logits, labels)
        assert abs(sam.value - ce.value) <= 1e-12
        assert np.allclose(sam.grad_logits, ce.grad_logits, atol=1e-12)


def test_sam_loss_k_zero_margins_equal_cross_entropy(rng, make_table):
    """A k=0 margin matrix gives exactly the CE value."""
    table = make_table(classes=4, dim=3)
    margins = margin_matrix(table, gamma=0.0, k=0)
    logits = rng.standard_normal((5, 4))
    labels = rng.integers(0, 4, size=5)
    sam = sam_loss(logits, labels, SamConfig(margins, margin_scale=16.0))
    assert sam.value == cross_entropy(logits, labels).value


def test_sam_loss_strictly_above_ce_with_active_margin(rng):
    """Any positive margin hit by a label increases the loss."""
    values = np.zeros((4, 4))
    values[1, 2] = 0.7
    cfg = SamConfig(_margins(values), margin_scale=2.0)
    logits = rng.standard_normal((3, 4))
    labels = np.array([1, 0, 3])
    assert sam_loss(logits, labels, cfg).value > cross_entropy(logits, labels).value


def test_sam_loss_matches_materialized_oracle_and_gradient(rng):
    """SAM equals CE over explicitly augmented logits; its gradient checks out."""
    c = 5
    values = np.abs(rng.standard_normal((c, c))) * 0.5
    np.fill_diagonal(values, 0.0)
    cfg = SamConfig(_margins(values), margin_scale=3.0)
    logits = rng.standard_normal((4, c))
    labels = rng.integers(0, c, size=4)
    augmented = logits.copy()
    for n, label in enumerate(labels):
        for j in range(c):
            augmented[n, j] += 3.0 * values[label, j]
    out = sam_loss(logits, labels, cfg)
    assert out.value == pytest.approx(_naive_cross_entropy(augmented, labels), abs=1e-12)
    assert np.array_equal(margin_augmented_logits(logits, labels, cfg), augmented)
    err = grad_check(lambda ps: sam_loss(ps[0], labels, cfg).value, [logits], [out.grad_logits])
    assert err < 1e-7
    assert np.allclose(out.grad_logits.sum(axis=1), 0.0, atol=1e-12)


def test_sam_loss_rejects_mismatched_margin_matrix(rng):
    """Margins built for another class count are refused."""
    cfg = SamConfig(_margins(np.zeros((3, 3))), margin_scale=1.0)
    with pytest.raises(ShapeError):
        sam_loss(rng.standard_normal((2, 4)), np.array([0, 1]), cfg)


def test_sam_config_rejects_non_positive_scale():
    """margin_scale must be positive."""
    with pytest.raises(ConfigError):
        SamConfig(_margins(np.zeros((2, 2))), margin_scale=0.0)


def test_sam_loss_is_shift_invariant(rng):
    """A per-row constant on the logits leaves the margin loss unchanged."""
    values = np.abs(rng.standard_normal((4, 4))) * 0.5
    np.fill_diagonal(values, 0.0)
    cfg = SamConfig(_margins(values), margin_scale=4.0)
    logits = rng.standard_normal((5, 4))
    labels = np.array([0, 1, 2, 3, 1])
    shifted = logits + rng.standard_normal((5, 1)) * 50
    assert sam_loss(shifted, labels, cfg).value == pytest.approx(
        sam_loss(logits, labels, cfg).value, abs=1e-10
    )
