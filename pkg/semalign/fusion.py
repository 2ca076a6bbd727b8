"""
Multimodal feature fusion: single-head cross-attention from region features
(queries) to class-name embeddings (keys and values).

    q = v Wq, k = t Wk, u = t Wv
    A = softmax(q k^T / sqrt(d))
    q_hat = q + A u
    fused = v + q_hat Wo
"""

from dataclasses import dataclass

import numpy as np

from semalign.exceptions import ContractError, ShapeError
from semalign.numerics import Matrix, init_matrix, matmul, require_finite, softmax_rows


@dataclass(frozen=True)
class FusionParams:
    """Cross-attention weights; w_o re-projects the d-dim output back to feature space."""

    w_q: Matrix
    w_k: Matrix
    w_v: Matrix
    w_o: Matrix

    def __post_init__(self) -> None:
        d = self.w_q.shape[1]
        if d < 1:
            raise ContractError("intermediate dimension must be at least 1")
        if self.w_k.shape[1] != d or self.w_v.shape[1] != d or self.w_o.shape[0] != d:
            raise ShapeError(
                "FusionParams", self.w_q.shape, self.w_k.shape, self.w_v.shape, self.w_o.shape
            )
        if self.w_o.shape[1] != self.w_q.shape[0] or self.w_k.shape[0] != self.w_v.shape[0]:
            raise ShapeError(
                "FusionParams", self.w_q.shape, self.w_k.shape, self.w_v.shape, self.w_o.shape
            )
        for name in ("w_q", "w_k", "w_v", "w_o"):
            require_finite(name, getattr(self, name))

    @property
    def d(self) -> int:
        return self.w_q.shape[1]

    @property
    def dim_feat(self) -> int:
        return self.w_q.shape[0]

    @property
    def dim_text(self) -> int:
        return self.w_k.shape[0]


@dataclass(frozen=True)
class FusionGrads:
    """Gradients of a scalar objective through one fusion block."""

    w_q: Matrix
    w_k: Matrix
    w_v: Matrix
    w_o: Matrix
    features: Matrix


@dataclass(frozen=True)
class FusionCache:
    """Intermediates kept from the forward pass."""

    q_v: Matrix
    k_t: Matrix
    v_t: Matrix
    attention: Matrix
    q_hat: Matrix
    fused_output: Matrix


def init_fusion_params(
    rng: np.random.Generator, dim_feat: int, dim_text: int, d: int
) -> FusionParams:
    """Random q/k/v projections; zero output projection so the block starts as identity."""
    return FusionParams(
        w_q=init_matrix(rng, dim_feat, d),
        w_k=init_matrix(rng, dim_text, d),
        w_v=init_matrix(rng, dim_text, d),
        w_o=np.zeros((d, dim_feat), dtype=np.float64),
    )


def fusion_forward(v: Matrix, t: Matrix, p: FusionParams) -> tuple[Matrix, FusionCache]:
    """Fuse N x D_v region features with C x D_t embeddings; returns (fused, cache)."""
    if v.ndim != 2 or v.shape[1] != p.dim_feat:
        raise ShapeError("fusion_forward features", v.shape, p.w_q.shape)
    if t.ndim != 2 or t.shape[1] != p.dim_text:
        raise ShapeError("fusion_forward embeddings", t.shape, p.w_k.shape)
    q_v = matmul(v, p.w_q)
    k_t = matmul(t, p.w_k)
    v_t = matmul(t, p.w_v)
    attention = softmax_rows(matmul(q_v, k_t.T) / np.sqrt(p.d))
    q_hat = q_v + matmul(attention, v_t)
    fused = v + matmul(q_hat, p.w_o)
    return fused, FusionCache(q_v, k_t, v_t, attention, q_hat, fused)


def fusion_backward(
    grad_fused: Matrix, cache: FusionCache, p: FusionParams, v: Matrix, t: Matrix
) -> FusionGrads:
    """Backward pass of fusion_forward, including the attention softmax Jacobian."""
    if grad_fused.shape != cache.fused_output.shape or v.shape != cache.fused_output.shape:
        raise ContractError(
            f"stale fusion cache: gradient {grad_fused.shape}, features {v.shape}, "
            f"cache {cache.fused_output.shape}"
        )
    if cache.k_t.shape != (t.shape[0], p.d):
        raise ContractError(f"stale fusion cache: keys {cache.k_t.shape} for {t.shape[0]} classes")

    scale = 1.0 / np.sqrt(p.d)
    grad_w_o = matmul(cache.q_hat.T, grad_fused)
    grad_q_hat = matmul(grad_fused, p.w_o.T)
    grad_attention = matmul(grad_q_hat, cache.v_t.T)
    grad_v_t = matmul(cache.attention.T, grad_q_hat)
    # softmax Jacobian applied row by row
    row_dot = np.sum(grad_attention * cache.attention, axis=1, keepdims=True)
    grad_scores = cache.attention * (grad_attention - row_dot) * scale
    grad_q_v = grad_q_hat + matmul(grad_scores, cache.k_t)
    grad_k_t = matmul(grad_scores.T, cache.q_v)
    return FusionGrads(
        w_q=matmul(v.T, grad_q_v),
        w_k=matmul(t.T, grad_k_t),
        w_v=matmul(t.T, grad_v_t),
        w_o=grad_w_o,
        features=grad_fused + matmul(grad_q_v, p.w_q.T),
    )
