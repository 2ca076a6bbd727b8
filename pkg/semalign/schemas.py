"""
Pydantic schemas for configuration validation and persisted documents.
"""

from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

FORMAT_VERSION = 1

MatrixRows = list[list[float]]


class StrictModel(BaseModel):
    """Base for config schemas: unknown keys are errors, never ignored."""

    model_config = ConfigDict(extra="forbid")


class SgdConfig(StrictModel):
    """Momentum SGD settings for one training stage (batch_size 0 means full batch)."""

    learning_rate: float = Field(default=0.1, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    steps: int = Field(default=200, ge=0)
    batch_size: int = Field(default=0, ge=0)


class SynthSpec(StrictModel):
    """Controls for the synthetic few-shot distribution."""

    num_base: int = Field(default=15, ge=1)
    num_novel: int = Field(default=5, ge=1)
    dim_raw: int = Field(default=24, ge=2)
    dim_feat: int = Field(default=16, ge=2)
    dim_text: int = Field(default=16, ge=2)
    noise_sigma: float = Field(default=0.2, gt=0)
    text_noise: float = Field(default=0.05, ge=0)
    decorrelate_text: bool = False
    similar_pairs: list[tuple[int, int, float]] = Field(
        default_factory=lambda: [(15, 3, 0.85)]
    )
    shots_k: int = Field(default=1, ge=1)
    base_per_class: int = Field(default=60, ge=1)
    test_per_class: int = Field(default=40, ge=1)
    seed: int = Field(default=0, ge=0)

    @property
    def num_classes(self) -> int:
        return self.num_base + self.num_novel

    @model_validator(mode="after")
    def check_ids(self) -> "SynthSpec":
        """Pairs must join a novel id to a base id with a cosine in (0, 1)."""
        if self.dim_raw < self.dim_feat:
            raise ValueError("dim_raw must be at least dim_feat")
        if self.dim_text < self.dim_feat and not self.decorrelate_text:
            raise ValueError("dim_text must be at least dim_feat to keep prototype cosines")
        for novel_id, base_id, cosine in self.similar_pairs:
            if not self.num_base <= novel_id < self.num_classes:
                raise ValueError(f"similar pair novel id {novel_id} is not a novel class")
            if not 0 <= base_id < self.num_base:
                raise ValueError(f"similar pair base id {base_id} is not a base class")
            if not 0.0 < cosine < 1.0:
                raise ValueError(f"target cosine {cosine} outside (0, 1)")
        return self


class ExperimentConfig(StrictModel):
    """Hyperparameters of one base-training + fine-tuning run."""

    gamma: float = Field(default=0.5, ge=0, lt=1)
    k_similar: Annotated[int, Field(ge=0)] | Literal["all"] = 3
    inter_dim: int = Field(default=32, ge=1)
    alpha: float = Field(default=16.0, gt=0)
    # alpha / 4: any similarity margin below ~0.97 stays reachable in cosine space
    margin_scale: float | None = Field(default=4.0, gt=0)
    margin_scope: Literal["all", "novel"] = "all"
    base_shot_ratio: float = Field(default=1.0, ge=0)
    linear_init: Literal["random", "base"] = "random"
    ssc: bool = True
    mff: bool = True
    sam: bool = True
    base: SgdConfig = Field(
        default_factory=lambda: SgdConfig(
            learning_rate=0.1, momentum=0.9, steps=300, batch_size=64
        )
    )
    finetune: SgdConfig = Field(
        default_factory=lambda: SgdConfig(learning_rate=0.05, momentum=0.9, steps=300)
    )
    seeds: list[Annotated[int, Field(ge=0)]] = Field(
        default_factory=lambda: [0, 1, 2, 3, 4], min_length=1
    )

    @model_validator(mode="after")
    def check_toggles(self) -> "ExperimentConfig":
        """SAM needs the similarity structure that only SSC provides."""
        if self.sam and not self.ssc:
            raise ValueError("sam=true requires ssc=true")
        return self

    @property
    def top_k(self) -> int | None:
        """Number of similar classes that receive margins; None means every class."""
        return None if self.k_similar == "all" else self.k_similar

    @property
    def effective_margin_scale(self) -> float:
        """Margin scale; None means the classifier's alpha."""
        return self.alpha if self.margin_scale is None else self.margin_scale


GridSweep = Literal["none", "modules", "inter_dim", "k_similar", "shots"]


class GridSpec(StrictModel):
    """Which ablation axis to sweep; values default per axis when omitted."""

    sweep: GridSweep = "none"
    values: list[int | str] | None = None


class CliConfig(ExperimentConfig):
    """Everything a config file may set: experiment keys plus synth.* and grid.*."""

    synth: SynthSpec = Field(default_factory=SynthSpec)
    grid: GridSpec = Field(default_factory=GridSpec)

    def experiment(self) -> ExperimentConfig:
        """Return the ExperimentConfig part of this configuration."""
        data = self.model_dump(include=set(ExperimentConfig.model_fields))
        return ExperimentConfig.model_validate(data)


class ResultRecord(BaseModel):
    """Metrics of one (cell, seed) run."""

    cell_id: str
    seed: int
    status: Literal["ok", "failed"] = "ok"
    novel_acc: float | None = None
    base_acc: float | None = None
    pair_confusion: dict[str, float] = Field(default_factory=dict)
    final_loss: float | None = None
    error: str | None = None
    error_kind: Literal["config", "training", "other"] | None = None


class CellSummary(BaseModel):
    """Mean and population std over seeds for one grid cell."""

    cell_id: str
    seeds: int
    novel_acc_mean: float
    novel_acc_std: float
    base_acc_mean: float
    base_acc_std: float
    pair_confusion_mean: dict[str, float] = Field(default_factory=dict)


class ModelDocument(BaseModel):
    """Serialized ModelSnapshot."""

    format_version: Literal[1] = FORMAT_VERSION
    stage: Literal["linear", "ssc"]
    alpha: float | None = None
    backbone: MatrixRows
    params: dict[str, MatrixRows]
    history: list[float] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)


class SplitDocument(BaseModel):
    """Features and labels of one data split."""

    features: MatrixRows
    labels: list[int]


class DatasetDocument(BaseModel):
    """Serialized DatasetSnapshot."""

    format_version: Literal[1] = FORMAT_VERSION
    spec: SynthSpec
    class_names: list[str]
    base_ids: list[int]
    novel_ids: list[int]
    embeddings: MatrixRows
    splits: dict[str, SplitDocument]
    prototypes: MatrixRows | None = None
