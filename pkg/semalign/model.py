"""
Model snapshots and the composite classification head.

A snapshot is a backbone (raw -> feature space) plus a head. The head is an
optional fusion block followed by either the semantic similarity classifier
or a linear classifier. Training and gradient verification share the same
forward/backward code here.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from semalign import fusion as fusion_ops
from semalign.classifier import (
    LinearClassifierParams,
    SscParams,
    linear_backward,
    linear_logits,
    ssc_backward,
    ssc_logits,
)
from semalign.exceptions import ContractError, ShapeError
from semalign.fusion import FusionCache, FusionParams
from semalign.numerics import Matrix, matmul
from semalign.schemas import FORMAT_VERSION

Stage = Literal["linear", "ssc"]


@dataclass(frozen=True)
class HeadCache:
    features: Matrix
    fused: Matrix
    fusion: FusionCache | None
    classifier: Any


@dataclass(frozen=True)
class Head:
    """Optional fusion block followed by exactly one classifier."""

    fusion: FusionParams | None = None
    ssc: SscParams | None = None
    linear: LinearClassifierParams | None = None

    def __post_init__(self) -> None:
        if (self.ssc is None) == (self.linear is None):
            raise ContractError("a head needs exactly one classifier (ssc or linear)")

    @property
    def stage(self) -> Stage:
        return "ssc" if self.ssc is not None else "linear"

    def params(self) -> dict[str, np.ndarray]:
        """Trainable tensors keyed by parameter-group name."""
        groups: dict[str, np.ndarray] = {}
        if self.fusion is not None:
            groups.update(
                {
                    "fusion.w_q": self.fusion.w_q,
                    "fusion.w_k": self.fusion.w_k,
                    "fusion.w_v": self.fusion.w_v,
                    "fusion.w_o": self.fusion.w_o,
                }
            )
        if self.ssc is not None:
            groups["ssc.projector"] = self.ssc.projector
        if self.linear is not None:
            groups["linear.weights"] = self.linear.weights
            groups["linear.bias"] = self.linear.bias
        return groups

    def with_params(self, groups: dict[str, np.ndarray]) -> "Head":
        """Return a head whose tensors are replaced by the given groups."""
        unknown = set(groups) - set(self.params())
        if unknown:
            raise ContractError(f"unknown parameter groups {sorted(unknown)}")
        fusion = self.fusion
        if fusion is not None:
            fusion = FusionParams(
                w_q=groups.get("fusion.w_q", fusion.w_q),
                w_k=groups.get("fusion.w_k", fusion.w_k),
                w_v=groups.get("fusion.w_v", fusion.w_v),
                w_o=groups.get("fusion.w_o", fusion.w_o),
            )
        ssc = self.ssc
        if ssc is not None:
            ssc = SscParams(projector=groups.get("ssc.projector", ssc.projector), alpha=ssc.alpha)
        linear = self.linear
        if linear is not None:
            linear = LinearClassifierParams(
                weights=groups.get("linear.weights", linear.weights),
                bias=groups.get("linear.bias", linear.bias),
            )
        return Head(fusion=fusion, ssc=ssc, linear=linear)

    def forward(self, features: Matrix, t: Matrix | None) -> tuple[Matrix, HeadCache]:
        """Logits for feature rows; t is the embedding matrix (needed by fusion and SSC)."""
        if (self.fusion is not None or self.ssc is not None) and t is None:
            raise ContractError("this head needs the class embedding table")
        fused, fusion_cache = features, None
        if self.fusion is not None:
            # module attribute lookup keeps the fusion kernels patchable in tests
            fused, fusion_cache = fusion_ops.fusion_forward(features, t, self.fusion)
        if self.ssc is not None:
            logits, classifier_cache = ssc_logits(fused, t, self.ssc)
        else:
            logits, classifier_cache = linear_logits(fused, self.linear), None
        return logits, HeadCache(features, fused, fusion_cache, classifier_cache)

    def backward(
        self, grad_logits: Matrix, cache: HeadCache, t: Matrix | None
    ) -> dict[str, np.ndarray]:
        """Gradients for every trainable group plus 'features' (w.r.t. the head input)."""
        grads: dict[str, np.ndarray] = {}
        if self.ssc is not None:
            ssc_grads = ssc_backward(grad_logits, cache.classifier, self.ssc, cache.fused, t)
            grads["ssc.projector"] = ssc_grads.projector
            grad_fused = ssc_grads.features
        else:
            linear_grads = linear_backward(grad_logits, cache.fused, self.linear)
            grads["linear.weights"] = linear_grads.weights
            grads["linear.bias"] = linear_grads.bias
            grad_fused = linear_grads.features
        if self.fusion is not None:
            fusion_grads = fusion_ops.fusion_backward(
                grad_fused, cache.fusion, self.fusion, cache.features, t
            )
            grads.update(
                {
                    "fusion.w_q": fusion_grads.w_q,
                    "fusion.w_k": fusion_grads.w_k,
                    "fusion.w_v": fusion_grads.w_v,
                    "fusion.w_o": fusion_grads.w_o,
                }
            )
            grads["features"] = fusion_grads.features
        else:
            grads["features"] = grad_fused
        return grads


@dataclass(frozen=True)
class ModelSnapshot:
    """Backbone plus head, with the loss history and the config that produced it."""

    backbone: Matrix
    head: Head
    history: tuple[float, ...] = ()
    config: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def stage(self) -> Stage:
        return self.head.stage

    def features(self, x: Matrix) -> Matrix:
        """Map raw inputs to feature space."""
        if x.ndim != 2 or x.shape[1] != self.backbone.shape[0]:
            raise ShapeError("backbone", x.shape, self.backbone.shape)
        return matmul(x, self.backbone)

    def logits(self, x: Matrix, t: Matrix | None = None) -> Matrix:
        """Class scores for raw input rows."""
        logits, _ = self.head.forward(self.features(x), t)
        return logits

    def with_head(
        self, head: Head, history: tuple[float, ...], config: dict[str, Any]
    ) -> "ModelSnapshot":
        return replace(self, head=head, history=history, config=config)
