"""Tests for the finite-difference gradient suite."""

import pytest

from semalign import fusion
from semalign.exceptions import ConfigError, GradientCheckError
from semalign.verification import (
    PARAMETER_GROUPS,
    TOLERANCE,
    SuiteDims,
    assert_gradients,
    check_seed,
    run_gradient_suite,
)


def test_gradient_suite_passes_over_twenty_seeds():
    """Every trainable group under CE and SAM matches central differences."""
    errors = run_gradient_suite(seed=0, seeds=20)
    assert list(errors) == list(PARAMETER_GROUPS)
    assert max(errors.values()) < TOLERANCE
    assert_gradients(errors)


def test_gradient_suite_covers_every_group_per_seed():
    """One seed already exercises every parameter group."""
    assert set(check_seed(3, SuiteDims())) == set(PARAMETER_GROUPS)


def test_gradient_suite_other_dims():
    """The suite runs at the largest supported toy size."""
    errors = run_gradient_suite(seed=5, dims=SuiteDims.parse("4,6,8,8,8,4"), seeds=2)
    assert max(errors.values()) < TOLERANCE


def test_corrupted_backward_is_detected(monkeypatch):
    """A wrong fusion gradient fails the check for the fusion groups."""
    original = fusion.fusion_backward

    def corrupted(*args, **kwargs):
        grads = original(*args, **kwargs)
        return fusion.FusionGrads(
            w_q=grads.w_q * 1.5,
            w_k=grads.w_k,
            w_v=grads.w_v,
            w_o=grads.w_o,
            features=grads.features,
        )

    monkeypatch.setattr(fusion, "fusion_backward", corrupted)
    errors = run_gradient_suite(seed=0, seeds=2)
    with pytest.raises(GradientCheckError) as exc_info:
        assert_gradients(errors)
    assert "fusion.w_q" in exc_info.value.failures
    assert "ssc.projector" not in exc_info.value.failures


@pytest.mark.parametrize("text", ["3,5,6", "a,b,c,d,e,f", "3,1,6,5,4,3", "3,5,6,5,4,0"])
def test_suite_dims_parse_rejects_bad_input(text):
    """Six positive integers with at least two classes."""
    with pytest.raises(ConfigError):
        SuiteDims.parse(text)


def test_run_gradient_suite_needs_a_seed():
    """Zero seeds is a config error."""
    with pytest.raises(ConfigError):
        run_gradient_suite(seeds=0)
