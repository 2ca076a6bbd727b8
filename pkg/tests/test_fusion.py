"""Unit tests for the cross-attention fusion block."""

import numpy as np
import pytest

from semalign.exceptions import ContractError, ShapeError
from semalign.fusion import FusionParams, fusion_backward, fusion_forward, init_fusion_params
from semalign.numerics import grad_check, make_rng, matmul, softmax_rows


def _random_params(rng, dim_feat=5, dim_text=4, d=3) -> FusionParams:
    return FusionParams(
        w_q=rng.standard_normal((dim_feat, d)),
        w_k=rng.standard_normal((dim_text, d)),
        w_v=rng.standard_normal((dim_text, d)),
        w_o=rng.standard_normal((d, dim_feat)),
    )


def test_zero_output_projection_is_identity(rng):
    """Freshly initialized fusion returns the features unchanged."""
    params = init_fusion_params(rng, dim_feat=5, dim_text=4, d=3)
    v = rng.standard_normal((6, 5))
    t = rng.standard_normal((7, 4))
    fused, _ = fusion_forward(v, t, params)
    assert np.array_equal(fused, v)


def test_attention_rows_sum_to_one():
    """Attention weights form a distribution over classes for every region."""
    for seed in range(20):
        rng = make_rng(seed, 5)
        n, c = int(rng.integers(1, 6)), int(rng.integers(2, 8))
        params = _random_params(rng)
        _, cache = fusion_forward(rng.standard_normal((n, 5)), rng.standard_normal((c, 4)), params)
        assert cache.attention.shape == (n, c)
        assert np.allclose(cache.attention.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(cache.attention >= 0.0)


def test_fusion_backward_matches_finite_differences(rng):
    """Every weight and the input features agree with central differences."""
    params = _random_params(rng)
    v = rng.standard_normal((3, 5))
    t = rng.standard_normal((4, 4))
    upstream = rng.standard_normal((3, 5))

    def loss(p: FusionParams, feats) -> float:
        fused, _ = fusion_forward(feats, t, p)
        return float(np.sum(fused * upstream))

    _, cache = fusion_forward(v, t, params)
    grads = fusion_backward(upstream, cache, params, v, t)
    for name in ("w_q", "w_k", "w_v", "w_o"):

        def objective(ps, name=name):
            fields = {key: getattr(params, key) for key in ("w_q", "w_k", "w_v", "w_o")}
            fields[name] = ps[0]
            return loss(FusionParams(**fields), v)

        assert grad_check(objective, [getattr(params, name)], [getattr(grads, name)]) < 1e-6
    assert grad_check(lambda ps: loss(params, ps[0]), [v], [grads.features]) < 1e-6


def test_fusion_backward_rejects_stale_cache(rng):
    """A cache from a different batch is refused."""
    params = _random_params(rng)
    t = rng.standard_normal((4, 4))
    _, cache = fusion_forward(rng.standard_normal((3, 5)), t, params)
    with pytest.raises(ContractError):
        fusion_backward(np.ones((2, 5)), cache, params, np.ones((2, 5)), t)


def test_fusion_rejects_mismatched_dims(rng):
    """Wrong feature or embedding widths raise ShapeError."""
    params = _random_params(rng)
    with pytest.raises(ShapeError):
        fusion_forward(np.ones((2, 4)), np.ones((3, 4)), params)
    with pytest.raises(ShapeError):
        fusion_forward(np.ones((2, 5)), np.ones((3, 5)), params)
    with pytest.raises(ShapeError):
        FusionParams(np.ones((5, 3)), np.ones((4, 2)), np.ones((4, 3)), np.ones((3, 5)))


def test_fusion_is_permutation_equivariant_in_batch(rng):
    """Permuting regions permutes the fused rows the same way."""
    params = _random_params(rng)
    v = rng.standard_normal((6, 5))
    t = rng.standard_normal((4, 4))
    perm = rng.permutation(6)
    fused, _ = fusion_forward(v, t, params)
    permuted, _ = fusion_forward(v[perm], t, params)
    assert np.array_equal(permuted, fused[perm])


def test_attention_row_ignores_constant_shift(rng):
    """Adding a constant to one row of attention scores leaves that row unchanged."""
    params = _random_params(rng)
    _, cache = fusion_forward(rng.standard_normal((3, 5)), rng.standard_normal((4, 4)), params)
    scores = matmul(cache.q_v, cache.k_t.T) / np.sqrt(params.d)
    assert np.array_equal(softmax_rows(scores), cache.attention)
    scores[1] += 37.5
    assert np.allclose(softmax_rows(scores), cache.attention, atol=1e-12)


def test_fusion_backward_zero_output_projection_passes_gradient_through(rng):
    """With W^o = 0 only the skip path carries gradient to the features."""
    params = init_fusion_params(rng, dim_feat=5, dim_text=4, d=3)
    v = rng.standard_normal((3, 5))
    t = rng.standard_normal((4, 4))
    upstream = rng.standard_normal((3, 5))
    _, cache = fusion_forward(v, t, params)
    grads = fusion_backward(upstream, cache, params, v, t)
    assert np.array_equal(grads.features, upstream)
    assert not np.any(grads.w_q) and not np.any(grads.w_k) and not np.any(grads.w_v)


def test_fusion_backward_zero_upstream_gives_zero_gradients(rng):
    """No upstream gradient, no parameter or feature gradient."""
    params = _random_params(rng)
    v = rng.standard_normal((3, 5))
    t = rng.standard_normal((4, 4))
    _, cache = fusion_forward(v, t, params)
    grads = fusion_backward(np.zeros((3, 5)), cache, params, v, t)
    for name in ("w_q", "w_k", "w_v", "w_o", "features"):
        assert not np.any(getattr(grads, name)), name
