"""
Finite-difference verification of every hand-derived backward pass.

The suite builds tiny random problems, runs the real training head
(backbone -> fusion -> SSC or linear classifier -> CE or SAM loss) and
compares each parameter group's analytic gradient with central differences.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from semalign.classifier import LinearClassifierParams, SscParams
from semalign.embeddings import ClassEmbeddingTable, margin_matrix
from semalign.exceptions import ConfigError, GradientCheckError
from semalign.fusion import FusionParams
from semalign.losses import LossOutput, SamConfig, cross_entropy, sam_loss
from semalign.model import Head
from semalign.numerics import Matrix, grad_check, make_rng, matmul

logger = logging.getLogger("semalign.verification")

TOLERANCE = 1e-4
PARAMETER_GROUPS = (
    "backbone",
    "linear.weights",
    "linear.bias",
    "ssc.projector",
    "fusion.w_q",
    "fusion.w_k",
    "fusion.w_v",
    "fusion.w_o",
)
_SUITE_STREAM = 99


@dataclass(frozen=True)
class SuiteDims:
    """Problem size: batch, classes, raw/feature/text widths, fusion width."""

    batch: int = 3
    classes: int = 5
    dim_raw: int = 6
    dim_feat: int = 5
    dim_text: int = 4
    inter_dim: int = 3

    @classmethod
    def parse(cls, text: str) -> "SuiteDims":
        """Parse "N,C,D_raw,D_feat,D_text,d"."""
        try:
            values = [int(part) for part in text.split(",")]
        except ValueError:
            raise ConfigError(f"dims must be six comma-separated integers, got '{text}'") from None
        if len(values) != 6 or min(values) < 1 or values[1] < 2:
            raise ConfigError(f"dims must be six positive integers with C >= 2, got '{text}'")
        return cls(*values)


LossFn = Callable[[Matrix, np.ndarray], LossOutput]


def _problem(seed: int, dims: SuiteDims) -> tuple[Matrix, np.ndarray, Matrix, Matrix, dict]:
    rng = make_rng(seed, _SUITE_STREAM)
    x = rng.standard_normal((dims.batch, dims.dim_raw))
    labels = rng.integers(0, dims.classes, size=dims.batch)
    names = tuple(f"c{i}" for i in range(dims.classes))
    table = ClassEmbeddingTable(names, rng.standard_normal((dims.classes, dims.dim_text)))
    table = table.normalized()
    backbone = 0.5 * rng.standard_normal((dims.dim_raw, dims.dim_feat))
    # every weight drawn non-zero so each branch of the head carries gradient
    fusion = FusionParams(
        w_q=0.5 * rng.standard_normal((dims.dim_feat, dims.inter_dim)),
        w_k=0.5 * rng.standard_normal((dims.dim_text, dims.inter_dim)),
        w_v=0.5 * rng.standard_normal((dims.dim_text, dims.inter_dim)),
        w_o=0.5 * rng.standard_normal((dims.inter_dim, dims.dim_feat)),
    )
    heads = {
        "ssc": Head(
            fusion=fusion,
            ssc=SscParams(rng.standard_normal((dims.dim_feat, dims.dim_text)), alpha=4.0),
        ),
        "linear": Head(
            fusion=None,
            linear=LinearClassifierParams(
                weights=rng.standard_normal((dims.dim_feat, dims.classes)),
                bias=rng.standard_normal(dims.classes),
            ),
        ),
    }
    margins = margin_matrix(table, gamma=0.0, k=None)
    losses: dict[str, LossFn] = {
        "ce": cross_entropy,
        "sam": lambda logits, y: sam_loss(logits, y, SamConfig(margins, margin_scale=2.0)),
    }
    return x, labels, table.vectors, backbone, {"heads": heads, "losses": losses}


def _composite_grads(
    head: Head, backbone: Matrix, x: Matrix, labels: np.ndarray, t: Matrix, loss_fn: LossFn
) -> dict[str, np.ndarray]:
    features = matmul(x, backbone)
    logits, cache = head.forward(features, t)
    out = loss_fn(logits, labels)
    grads = head.backward(out.grad_logits, cache, t)
    grads["backbone"] = matmul(x.T, grads.pop("features"))
    return grads


def _composite_loss(
    head: Head, backbone: Matrix, x: Matrix, labels: np.ndarray, t: Matrix, loss_fn: LossFn
) -> float:
    logits, _ = head.forward(matmul(x, backbone), t)
    return loss_fn(logits, labels).value


def check_seed(seed: int, dims: SuiteDims, h: float = 1e-6) -> dict[str, float]:
    """Max relative error per parameter group for one random problem."""
    x, labels, t, backbone, parts = _problem(seed, dims)
    errors: dict[str, float] = {}
    for head in parts["heads"].values():
        for loss_fn in parts["losses"].values():
            analytic = _composite_grads(head, backbone, x, labels, t, loss_fn)
            groups = {"backbone": backbone, **head.params()}
            for name, value in groups.items():

                def objective(params: list[Matrix], name: str = name) -> float:
                    if name == "backbone":
                        return _composite_loss(head, params[0], x, labels, t, loss_fn)
                    return _composite_loss(
                        head.with_params({name: params[0]}), backbone, x, labels, t, loss_fn
                    )

                err = grad_check(objective, [value], [analytic[name]], h)
                errors[name] = max(errors.get(name, 0.0), err)
    return errors


def run_gradient_suite(
    seed: int = 0, dims: SuiteDims | None = None, seeds: int = 20, h: float = 1e-6
) -> dict[str, float]:
    """Max relative error per parameter group over seeds seed..seed+seeds-1."""
    dims = dims or SuiteDims()
    if seeds < 1:
        raise ConfigError("the gradient suite needs at least one seed")
    worst = {name: 0.0 for name in PARAMETER_GROUPS}
    for offset in range(seeds):
        for name, err in check_seed(seed + offset, dims, h).items():
            worst[name] = max(worst[name], err)
    logger.info("Gradient suite over %d seeds: worst %.3e", seeds, max(worst.values()))
    return worst


def assert_gradients(errors: dict[str, float], tolerance: float = TOLERANCE) -> None:
    """Raise GradientCheckError listing every group at or above tolerance."""
    failures = {name: err for name, err in errors.items() if not err < tolerance}
    if failures:
        raise GradientCheckError(failures, tolerance)
