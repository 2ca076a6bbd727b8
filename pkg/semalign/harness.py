"""
Synthetic few-shot data and the two-stage protocol: base training with a
linear classifier, then fine-tuning on a balanced K-shot set with the
backbone frozen.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from semalign.classifier import LinearClassifierParams, init_linear_params, init_ssc_params
from semalign.embeddings import (
    ClassEmbeddingTable,
    ClassPartition,
    margin_matrix,
    partition_classes,
    scope_mask,
)
from semalign.exceptions import ConfigError, ContractError, GenerationError, TrainingDivergedError
from semalign.fusion import init_fusion_params
from semalign.losses import LossOutput, SamConfig, cross_entropy, sam_loss
from semalign.model import Head, ModelSnapshot
from semalign.numerics import Matrix, init_matrix, make_rng, matmul, sgd_step
from semalign.schemas import ExperimentConfig, SgdConfig, SynthSpec

logger = logging.getLogger("semalign.harness")

SPLITS = ("base_train", "novel_train", "test")

# generator streams, so adding draws to one component never shifts another
_PROTOTYPES, _TEXT, _MIXING, _SAMPLES = 0, 1, 2, 3
_BASE_STAGE, _FINETUNE_STAGE = 10, 20


@dataclass(frozen=True)
class DatasetSnapshot:
    """Generated splits with their class embeddings and base/novel partition."""

    features: dict[str, Matrix]
    labels: dict[str, np.ndarray]
    embedding_table: ClassEmbeddingTable | None
    partition: ClassPartition
    spec: SynthSpec
    prototypes: Matrix | None = None

    @property
    def class_names(self) -> tuple[str, ...]:
        if self.embedding_table is None:
            raise ContractError("dataset has no embedding table")
        return self.embedding_table.names


def class_names_for(spec: SynthSpec) -> list[str]:
    """Base classes first (ids 0..num_base-1), then novel classes."""
    return [f"base{i:02d}" for i in range(spec.num_base)] + [
        f"novel{i:02d}" for i in range(spec.num_novel)
    ]


def _unit_rows(matrix: Matrix) -> Matrix:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise GenerationError("drew a zero-norm vector; change the seed")
    return matrix / norms


def _place_similar_pairs(prototypes: Matrix, pairs: list[tuple[int, int, float]]) -> Matrix:
    """Rotate each paired novel prototype so its cosine with the base prototype is the target."""
    prototypes = prototypes.copy()
    seen: dict[int, int] = {}
    for novel_id, base_id, target in pairs:
        if novel_id in seen:
            raise GenerationError(
                f"novel class {novel_id} is paired with both {seen[novel_id]} and {base_id}; "
                "both cosine targets cannot be met"
            )
        seen[novel_id] = base_id
        anchor = prototypes[base_id]
        residual = prototypes[novel_id] - np.dot(prototypes[novel_id], anchor) * anchor
        norm = np.linalg.norm(residual)
        if norm < 1e-12:
            raise GenerationError(f"novel class {novel_id} is collinear with base class {base_id}")
        prototypes[novel_id] = target * anchor + np.sqrt(1.0 - target**2) * residual / norm
    return prototypes


def _text_embeddings(spec: SynthSpec, prototypes: Matrix, rng: np.random.Generator) -> Matrix:
    """Prototypes carried into text space by an isometry, plus a little noise."""
    count = spec.num_classes
    if spec.decorrelate_text:
        return _unit_rows(rng.standard_normal((count, spec.dim_text)))
    # orthonormal columns, so to_text preserves inner products (needs dim_text >= dim_feat)
    basis, _ = np.linalg.qr(rng.standard_normal((spec.dim_text, spec.dim_feat)))
    to_text = basis.T
    noise = spec.text_noise * rng.standard_normal((count, spec.dim_text))
    return _unit_rows(matmul(prototypes, to_text) + noise)


def generate_dataset(spec: SynthSpec) -> DatasetSnapshot:
    """Draw prototypes, text embeddings and the base / K-shot novel / test splits."""
    names = class_names_for(spec)
    partition = partition_classes(names, names[spec.num_base :])

    proto_rng = make_rng(spec.seed, _PROTOTYPES)
    prototypes = _unit_rows(proto_rng.standard_normal((spec.num_classes, spec.dim_feat)))
    prototypes = _place_similar_pairs(prototypes, list(spec.similar_pairs))

    text = _text_embeddings(spec, prototypes, make_rng(spec.seed, _TEXT))
    table = ClassEmbeddingTable(tuple(names), text).normalized()

    mixing_rng = make_rng(spec.seed, _MIXING)
    mixing = mixing_rng.standard_normal((spec.dim_feat, spec.dim_raw)) / np.sqrt(spec.dim_raw)
    if np.linalg.matrix_rank(mixing) < spec.dim_feat:
        raise GenerationError("feature-to-raw mixing matrix is rank deficient; change the seed")

    def draw(
        class_ids: tuple[int, ...], per_class: int, split: int
    ) -> tuple[Matrix, np.ndarray]:
        # one stream per (split, class); draws fill sequentially, so K shots are a
        # prefix of K+1 and no split depends on another split's size
        labels = np.repeat(np.asarray(class_ids, dtype=np.int64), per_class)
        noise = np.concatenate(
            [
                make_rng(spec.seed, _SAMPLES, split, class_id).standard_normal(
                    (per_class, spec.dim_feat)
                )
                for class_id in class_ids
            ]
            or [np.zeros((0, spec.dim_feat))]
        )
        return matmul(prototypes[labels] + spec.noise_sigma * noise, mixing), labels

    features: dict[str, Matrix] = {}
    labels: dict[str, np.ndarray] = {}
    features["base_train"], labels["base_train"] = draw(
        partition.base_ids, spec.base_per_class, 0
    )
    features["novel_train"], labels["novel_train"] = draw(partition.novel_ids, spec.shots_k, 1)
    features["test"], labels["test"] = draw(
        partition.base_ids + partition.novel_ids, spec.test_per_class, 2
    )
    logger.debug(
        "Generated dataset seed=%d: %s",
        spec.seed,
        ", ".join(f"{split}={labels[split].size}" for split in SPLITS),
    )
    return DatasetSnapshot(features, labels, table, partition, spec, prototypes)


def _batches(rng: np.random.Generator, count: int, batch_size: int) -> np.ndarray | None:
    """Row indices of one minibatch, or None for the full batch."""
    if batch_size == 0 or batch_size >= count:
        return None
    return np.sort(rng.choice(count, size=batch_size, replace=False))


def _run_sgd(
    stage: str,
    groups: dict[str, np.ndarray],
    objective: Callable[[dict[str, np.ndarray], np.ndarray | None], tuple[float, dict]],
    count: int,
    sgd: SgdConfig,
    rng: np.random.Generator,
) -> tuple[dict[str, np.ndarray], list[float]]:
    """Shared momentum-SGD loop; objective returns (loss, grads) for a batch."""
    velocity = {name: np.zeros_like(value) for name, value in groups.items()}
    history: list[float] = []
    for step in range(1, sgd.steps + 1):
        loss, grads = objective(groups, _batches(rng, count, sgd.batch_size))
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDivergedError(stage, step)
        updated = {}
        for name, value in groups.items():
            updated[name], velocity[name] = sgd_step(value, grads[name], velocity[name], sgd)
        if not all(np.all(np.isfinite(value)) for value in updated.values()):
            raise TrainingDivergedError(stage, step)
        groups = updated
        history.append(loss)
        if step == 1 or step % 50 == 0 or step == sgd.steps:
            logger.debug("%s step %d/%d loss=%.6f", stage, step, sgd.steps, loss)
    return groups, history


def train_base(data: DatasetSnapshot, cfg: ExperimentConfig, seed: int = 0) -> ModelSnapshot:
    """Train backbone + linear classifier with cross-entropy on base classes only."""
    x = data.features["base_train"]
    y = data.labels["base_train"]
    if y.size == 0:
        raise ContractError("base training split is empty")
    if tuple(data.partition.base_ids) != tuple(range(len(data.partition.base_ids))):
        raise ContractError("base classes must occupy ids 0..num_base-1")
    spec = data.spec
    rng = make_rng(seed, _BASE_STAGE)
    backbone = init_matrix(rng, spec.dim_raw, spec.dim_feat)
    head = Head(linear=init_linear_params(rng, spec.dim_feat, len(data.partition.base_ids)))

    def objective(groups, rows):
        xb, yb = (x, y) if rows is None else (x[rows], y[rows])
        current = head.with_params({k: v for k, v in groups.items() if k != "backbone"})
        features = matmul(xb, groups["backbone"])
        logits, cache = current.forward(features, None)
        out = cross_entropy(logits, yb)
        grads = current.backward(out.grad_logits, cache, None)
        grads["backbone"] = matmul(xb.T, grads.pop("features"))
        return out.value, grads

    groups = {"backbone": backbone, **head.params()}
    groups, history = _run_sgd("base", groups, objective, y.size, cfg.base, rng)
    trained = head.with_params({k: v for k, v in groups.items() if k != "backbone"})
    if history:
        logger.info("Base training done: %d steps, final loss %.4f", len(history), history[-1])
    return ModelSnapshot(
        backbone=groups["backbone"],
        head=trained,
        history=tuple(history),
        config=cfg.model_dump(mode="json"),
    )


def finetune_set(
    data: DatasetSnapshot, cfg: ExperimentConfig, rng: np.random.Generator
) -> tuple[Matrix, np.ndarray]:
    """All K novel shots plus round(base_shot_ratio * K) re-sampled shots per base class."""
    shots = data.spec.shots_k
    base_shots = int(round(cfg.base_shot_ratio * shots))
    base_x, base_y = data.features["base_train"], data.labels["base_train"]
    rows: list[np.ndarray] = []
    for class_id in data.partition.base_ids:
        candidates = np.flatnonzero(base_y == class_id)
        if base_shots > candidates.size:
            raise ConfigError(
                f"base_shot_ratio asks for {base_shots} shots of class {class_id}, "
                f"only {candidates.size} available"
            )
        rows.append(np.sort(rng.choice(candidates, size=base_shots, replace=False)))
    picked = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    x = np.concatenate([base_x[picked], data.features["novel_train"]], axis=0)
    y = np.concatenate([base_y[picked], data.labels["novel_train"]])
    return x, y


def build_finetune_head(
    base_model: ModelSnapshot,
    data: DatasetSnapshot,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> Head:
    """Fresh fine-tuning head: optional fusion block, then SSC or a C-way linear classifier."""
    spec = data.spec
    table = data.embedding_table
    fusion = None
    if cfg.mff:
        fusion = init_fusion_params(rng, spec.dim_feat, table.dim, cfg.inter_dim)
    if cfg.ssc:
        return Head(fusion=fusion, ssc=init_ssc_params(rng, spec.dim_feat, table.dim, cfg.alpha))
    linear = init_linear_params(rng, spec.dim_feat, spec.num_classes)
    if cfg.linear_init == "base":
        base_ids = list(data.partition.base_ids)
        weights, bias = linear.weights.copy(), linear.bias.copy()
        weights[:, base_ids] = base_model.head.linear.weights
        bias[base_ids] = base_model.head.linear.bias
        linear = LinearClassifierParams(weights=weights, bias=bias)
    return Head(fusion=fusion, linear=linear)


def finetune_loss(
    data: DatasetSnapshot, cfg: ExperimentConfig
) -> Callable[[Matrix, np.ndarray], LossOutput]:
    """SAM loss with margins from the embedding table when enabled, else cross-entropy."""
    if not cfg.sam:
        return cross_entropy
    margins = margin_matrix(
        data.embedding_table,
        cfg.gamma,
        cfg.top_k,
        mask=scope_mask(data.partition, cfg.margin_scope),
    )
    sam_cfg = SamConfig(margins=margins, margin_scale=cfg.effective_margin_scale)
    return lambda logits, labels: sam_loss(logits, labels, sam_cfg)


def finetune_novel(
    base_model: ModelSnapshot, data: DatasetSnapshot, cfg: ExperimentConfig, seed: int = 0
) -> ModelSnapshot:
    """Fine-tune a fresh head on the balanced K-shot set; the backbone stays frozen."""
    if base_model.stage != "linear":
        raise ContractError(f"fine-tuning starts from a linear-stage model, got {base_model.stage}")
    if data.embedding_table is None:
        raise ContractError("fine-tuning needs the class embedding table")
    if cfg.sam and not cfg.ssc:
        raise ConfigError("sam=true requires ssc=true")

    rng = make_rng(seed, _FINETUNE_STAGE)
    x, y = finetune_set(data, cfg, rng)
    features = base_model.features(x)
    t = data.embedding_table.vectors
    head = build_finetune_head(base_model, data, cfg, rng)
    loss_fn = finetune_loss(data, cfg)

    def objective(groups, rows):
        hb, yb = (features, y) if rows is None else (features[rows], y[rows])
        current = head.with_params(groups)
        logits, cache = current.forward(hb, t)
        out = loss_fn(logits, yb)
        grads = current.backward(out.grad_logits, cache, t)
        grads.pop("features")
        return out.value, grads

    groups, history = _run_sgd("finetune", head.params(), objective, y.size, cfg.finetune, rng)
    if history:
        logger.info(
            "Fine-tuning done (ssc=%s mff=%s sam=%s): %d steps, final loss %.4f",
            cfg.ssc,
            cfg.mff,
            cfg.sam,
            len(history),
            history[-1],
        )
    return base_model.with_head(
        head.with_params(groups), tuple(history), cfg.model_dump(mode="json")
    )
