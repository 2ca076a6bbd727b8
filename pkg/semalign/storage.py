"""
File persistence: model and dataset documents, split files and result CSVs.

Documents are indented JSON validated by the schemas in schemas.py; every
document carries a mandatory format_version.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from semalign.classifier import LinearClassifierParams, SscParams
from semalign.embeddings import ClassEmbeddingTable, ClassPartition
from semalign.exceptions import ConfigError, InputFileError
from semalign.fusion import FusionParams
from semalign.grid import CellRun
from semalign.harness import SPLITS, DatasetSnapshot
from semalign.model import Head, ModelSnapshot
from semalign.schemas import CellSummary, DatasetDocument, ModelDocument, SplitDocument

logger = logging.getLogger("semalign.storage")

RESULT_COLUMNS = ["cell_id", "seed", "novel_acc", "base_acc"]


def _rows(matrix: np.ndarray) -> list[list[float]]:
    return np.atleast_2d(matrix).tolist()


def _matrix(rows: list[list[float]]) -> np.ndarray:
    return np.asarray(rows, dtype=np.float64)


def model_to_document(model: ModelSnapshot) -> ModelDocument:
    """Flatten a snapshot into its serializable document."""
    params = {name: _rows(value) for name, value in model.head.params().items()}
    return ModelDocument(
        format_version=model.format_version,
        stage=model.stage,
        alpha=model.head.ssc.alpha if model.head.ssc is not None else None,
        backbone=_rows(model.backbone),
        params=params,
        history=list(model.history),
        config=model.config,
    )


def document_to_model(doc: ModelDocument) -> ModelSnapshot:
    """Rebuild a snapshot from its document."""
    params = {name: _matrix(rows) for name, rows in doc.params.items()}
    fusion = None
    if "fusion.w_q" in params:
        fusion = FusionParams(
            w_q=params["fusion.w_q"],
            w_k=params["fusion.w_k"],
            w_v=params["fusion.w_v"],
            w_o=params["fusion.w_o"],
        )
    if doc.stage == "ssc":
        head = Head(fusion=fusion, ssc=SscParams(params["ssc.projector"], alpha=doc.alpha))
    else:
        linear = LinearClassifierParams(
            weights=params["linear.weights"], bias=params["linear.bias"].reshape(-1)
        )
        head = Head(fusion=fusion, linear=linear)
    return ModelSnapshot(
        backbone=_matrix(doc.backbone),
        head=head,
        history=tuple(doc.history),
        config=doc.config,
        format_version=doc.format_version,
    )


def _write_document(document: BaseModel, path: str | Path) -> None:
    Path(path).write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _read_document(model_cls: type[BaseModel], path: str | Path) -> BaseModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(path, exc.strerror or "cannot be read") from exc
    try:
        return model_cls.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"{path}: not a valid {model_cls.__name__}: {exc}") from exc


def save_model(model: ModelSnapshot, path: str | Path) -> None:
    _write_document(model_to_document(model), path)


def load_model(path: str | Path) -> ModelSnapshot:
    return document_to_model(_read_document(ModelDocument, path))


def dataset_to_document(data: DatasetSnapshot) -> DatasetDocument:
    return DatasetDocument(
        spec=data.spec,
        class_names=list(data.class_names),
        base_ids=list(data.partition.base_ids),
        novel_ids=list(data.partition.novel_ids),
        embeddings=_rows(data.embedding_table.vectors),
        splits={
            split: SplitDocument(
                features=_rows(data.features[split]), labels=data.labels[split].tolist()
            )
            for split in SPLITS
        },
        prototypes=_rows(data.prototypes) if data.prototypes is not None else None,
    )


def document_to_dataset(doc: DatasetDocument) -> DatasetSnapshot:
    table = ClassEmbeddingTable(tuple(doc.class_names), _matrix(doc.embeddings))
    return DatasetSnapshot(
        features={
            split: _matrix(body.features).reshape(len(body.labels), doc.spec.dim_raw)
            for split, body in doc.splits.items()
        },
        labels={
            split: np.asarray(body.labels, dtype=np.int64) for split, body in doc.splits.items()
        },
        embedding_table=table,
        partition=ClassPartition(tuple(doc.base_ids), tuple(doc.novel_ids)),
        spec=doc.spec,
        prototypes=_matrix(doc.prototypes) if doc.prototypes is not None else None,
    )


def save_dataset(data: DatasetSnapshot, path: str | Path) -> None:
    _write_document(dataset_to_document(data), path)


def load_dataset(path: str | Path) -> DatasetSnapshot:
    return document_to_dataset(_read_document(DatasetDocument, path))


def write_split_csvs(data: DatasetSnapshot, directory: str | Path) -> list[Path]:
    """One CSV per split: a label column followed by the raw feature columns."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for split in SPLITS:
        features = data.features[split]
        frame = pd.DataFrame(features, columns=[f"x{i}" for i in range(features.shape[1])])
        frame.insert(0, "label", data.labels[split])
        path = directory / f"{split}.csv"
        frame.to_csv(path, index=False, lineterminator="\n")
        written.append(path)
    return written


def results_frame(runs: Sequence[CellRun]) -> pd.DataFrame:
    """One row per (cell, seed); failed runs keep their row with empty metrics."""
    pair_columns: list[str] = []
    for run in runs:
        for key in run.record.pair_confusion:
            if key not in pair_columns:
                pair_columns.append(key)
    rows = []
    for run in runs:
        record = run.record
        row = {
            "cell_id": record.cell_id,
            "seed": record.seed,
            "novel_acc": record.novel_acc,
            "base_acc": record.base_acc,
        }
        row.update({key: record.pair_confusion.get(key) for key in pair_columns})
        rows.append(row)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS + pair_columns)


def write_results_csv(runs: Sequence[CellRun], path: str | Path) -> None:
    results_frame(runs).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def write_summary_csv(summaries: Sequence[CellSummary], path: str | Path) -> None:
    rows = []
    for summary in summaries:
        row = summary.model_dump(exclude={"pair_confusion_mean"})
        row.update({f"{key}_mean": value for key, value in summary.pair_confusion_mean.items()})
        rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def write_failures_csv(runs: Sequence[CellRun], path: str | Path) -> bool:
    """Write failed runs; returns False (and writes nothing) when none failed."""
    failed = [run.record for run in runs if run.record.status == "failed"]
    if not failed:
        return False
    frame = pd.DataFrame(
        [
            {"cell_id": r.cell_id, "seed": r.seed, "kind": r.error_kind, "error": r.error}
            for r in failed
        ]
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    return True
