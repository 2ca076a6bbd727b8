"""
Classification heads: the semantic similarity classifier (scaled cosine between
projected region features and frozen class embeddings) and the linear baseline.
"""

from dataclasses import dataclass

import numpy as np

from semalign.exceptions import ContractError, DegenerateFeatureError, ShapeError
from semalign.numerics import Matrix, init_matrix, matmul, require_finite

DEFAULT_ALPHA = 16.0
MIN_PROJECTED_NORM = 1e-12


@dataclass(frozen=True)
class SscParams:
    """Projector P (D_v x D_t) and logit scale alpha."""

    projector: Matrix
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ContractError(f"alpha must be positive, got {self.alpha}")
        require_finite("projector", self.projector)


@dataclass(frozen=True)
class SscCache:
    z: Matrix
    norms: Matrix
    z_hat: Matrix
    cosine: Matrix


@dataclass(frozen=True)
class SscGrads:
    """Gradients for P and the input features; pre_norm is the gradient w.r.t. z = vP."""

    projector: Matrix
    features: Matrix
    pre_norm: Matrix


@dataclass(frozen=True)
class LinearClassifierParams:
    weights: Matrix
    bias: np.ndarray

    def __post_init__(self) -> None:
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeError("LinearClassifierParams", self.weights.shape, self.bias.shape)
        require_finite("weights", self.weights)
        require_finite("bias", self.bias)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class LinearGrads:
    weights: Matrix
    bias: np.ndarray
    features: Matrix


def init_ssc_params(
    rng: np.random.Generator, dim_feat: int, dim_text: int, alpha: float = DEFAULT_ALPHA
) -> SscParams:
    return SscParams(projector=init_matrix(rng, dim_feat, dim_text), alpha=alpha)


def init_linear_params(
    rng: np.random.Generator, dim_feat: int, num_classes: int
) -> LinearClassifierParams:
    return LinearClassifierParams(
        weights=init_matrix(rng, dim_feat, num_classes),
        bias=np.zeros(num_classes, dtype=np.float64),
    )


def ssc_logits(v: Matrix, t: Matrix, p: SscParams) -> tuple[Matrix, SscCache]:
    """
    logits[n, c] = alpha * cos(v_n P, t_c). The table t must be unit-normalized;
    it is read, never updated.
    """
    if v.ndim != 2 or v.shape[1] != p.projector.shape[0]:
        raise ShapeError("ssc_logits features", v.shape, p.projector.shape)
    if t.ndim != 2 or t.shape[1] != p.projector.shape[1]:
        raise ShapeError("ssc_logits embeddings", t.shape, p.projector.shape)
    z = matmul(v, p.projector)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    small = np.flatnonzero(norms[:, 0] < MIN_PROJECTED_NORM)
    if small.size:
        row = int(small[0])
        raise DegenerateFeatureError(row, float(norms[row, 0]))
    z_hat = z / norms
    cosine = matmul(z_hat, t.T)
    return p.alpha * cosine, SscCache(z=z, norms=norms, z_hat=z_hat, cosine=cosine)


def ssc_backward(
    grad_logits: Matrix, cache: SscCache, p: SscParams, v: Matrix, t: Matrix
) -> SscGrads:
    """Backward of ssc_logits through the cosine and the row normalization."""
    if grad_logits.shape != cache.cosine.shape or v.shape[0] != cache.z.shape[0]:
        raise ContractError(
            f"stale classifier cache: gradient {grad_logits.shape}, cache {cache.cosine.shape}"
        )
    if t.shape[0] != cache.cosine.shape[1]:
        raise ContractError(f"stale classifier cache: {t.shape[0]} classes vs cache")
    grad_z_hat = matmul(p.alpha * grad_logits, t)
    # project onto the tangent space of the unit sphere at z_hat
    radial = np.sum(grad_z_hat * cache.z_hat, axis=1, keepdims=True)
    grad_z = (grad_z_hat - radial * cache.z_hat) / cache.norms
    return SscGrads(
        projector=matmul(v.T, grad_z),
        features=matmul(grad_z, p.projector.T),
        pre_norm=grad_z,
    )


def linear_logits(v: Matrix, p: LinearClassifierParams) -> Matrix:
    """Affine scores v W + b."""
    if v.ndim != 2 or v.shape[1] != p.weights.shape[0]:
        raise ShapeError("linear_logits", v.shape, p.weights.shape)
    return matmul(v, p.weights) + p.bias


def linear_backward(grad_logits: Matrix, v: Matrix, p: LinearClassifierParams) -> LinearGrads:
    """Gradients of linear_logits for W, b and v."""
    if grad_logits.shape != (v.shape[0], p.num_classes):
        raise ShapeError("linear_backward", grad_logits.shape, (v.shape[0], p.num_classes))
    return LinearGrads(
        weights=matmul(v.T, grad_logits),
        bias=np.sum(grad_logits, axis=0),
        features=matmul(grad_logits, p.weights.T),
    )
