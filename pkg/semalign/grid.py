"""
Experiment grids: ablation sweeps over module toggles, fusion width, the
number of similar classes and the shot count, each run over several seeds.
"""

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np
from pydantic import ValidationError

from semalign.exceptions import ConfigError, SemalignError, TrainingDivergedError
from semalign.harness import DatasetSnapshot, finetune_novel, generate_dataset, train_base
from semalign.metrics import ConfusionMatrix, evaluate, pair_confusion
from semalign.model import ModelSnapshot
from semalign.schemas import CellSummary, ExperimentConfig, GridSpec, ResultRecord, SynthSpec

logger = logging.getLogger("semalign.grid")

DEFAULT_SWEEPS: dict[str, list[int | str]] = {
    "modules": ["linear", "ssc", "ssc+mff", "ssc+sam", "ssc+mff+sam"],
    "inter_dim": [16, 32, 64, 128, 256, 512],
    "k_similar": [1, 2, 3, 4, "all"],
    "shots": [1, 2, 3, 5, 10],
}
MODULE_TOKENS = {"linear", "ssc", "mff", "sam"}


@dataclass(frozen=True)
class GridCell:
    """One configuration of the sweep; shots overrides the spec's K when set."""

    cell_id: str
    config: ExperimentConfig
    shots: int | None = None


@dataclass(frozen=True)
class CellRun:
    """Everything one (cell, seed) run produced."""

    cell: GridCell
    record: ResultRecord
    model: ModelSnapshot | None = None
    confusion: ConfusionMatrix | None = None
    error: Exception | None = None


def _module_update(value: str) -> dict[str, bool]:
    tokens = {token.strip() for token in str(value).lower().split("+") if token.strip()}
    if not tokens or not tokens <= MODULE_TOKENS:
        raise ConfigError(f"module cell '{value}' must combine {sorted(MODULE_TOKENS)}")
    if "linear" in tokens and "ssc" in tokens:
        raise ConfigError(f"module cell '{value}' names both linear and ssc")
    return {"ssc": "ssc" in tokens, "mff": "mff" in tokens, "sam": "sam" in tokens}


def _with(config: ExperimentConfig, update: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **update})
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def build_grid(config: ExperimentConfig, grid: GridSpec) -> list[GridCell]:
    """Expand a sweep into cells; values default to the standard sweep for the axis."""
    if grid.sweep == "none":
        return [GridCell("default", config)]
    values = grid.values if grid.values is not None else DEFAULT_SWEEPS[grid.sweep]
    if not values:
        raise ConfigError(f"grid sweep '{grid.sweep}' has no values")
    cells: list[GridCell] = []
    for value in values:
        cell_id = f"{grid.sweep}={value}"
        if grid.sweep == "modules":
            cells.append(GridCell(cell_id, _with(config, _module_update(str(value)))))
        elif grid.sweep == "inter_dim":
            cells.append(GridCell(cell_id, _with(config, {"inter_dim": value})))
        elif grid.sweep == "k_similar":
            cells.append(GridCell(cell_id, _with(config, {"k_similar": value})))
        else:
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"shots must be positive integers, got {value!r}")
            cells.append(GridCell(cell_id, config, shots=value))
    if len({cell.cell_id for cell in cells}) != len(cells):
        raise ConfigError(f"grid sweep '{grid.sweep}' repeats a value")
    return cells


def pair_column(data: DatasetSnapshot, novel_id: int, base_id: int) -> str:
    names = data.class_names
    return f"confusion_{names[novel_id]}_{names[base_id]}"


def evaluate_run(
    model: ModelSnapshot, data: DatasetSnapshot, cell_id: str, seed: int
) -> tuple[ResultRecord, ConfusionMatrix]:
    """Test-split metrics of a fine-tuned model."""
    _, cm = evaluate(
        model,
        data.features["test"],
        data.labels["test"],
        data.class_names,
        data.embedding_table.vectors,
    )
    pairs = {
        pair_column(data, novel_id, base_id): pair_confusion(cm, novel_id, base_id)
        for novel_id, base_id, _ in data.spec.similar_pairs
    }
    record = ResultRecord(
        cell_id=cell_id,
        seed=seed,
        novel_acc=cm.subset_accuracy(data.partition.novel_ids),
        base_acc=cm.subset_accuracy(data.partition.base_ids),
        pair_confusion=pairs,
        final_loss=model.history[-1] if model.history else None,
    )
    return record, cm


def run_cell(cell: GridCell, spec: SynthSpec, seed: int) -> CellRun:
    """Generate, base-train, fine-tune and evaluate one (cell, seed); failures are recorded."""
    update: dict[str, Any] = {"seed": seed}
    if cell.shots is not None:
        update["shots_k"] = cell.shots
    try:
        cell_spec = SynthSpec.model_validate({**spec.model_dump(), **update})
        data = generate_dataset(cell_spec)
        base = train_base(data, cell.config, seed)
        model = finetune_novel(base, data, cell.config, seed)
        record, cm = evaluate_run(model, data, cell.cell_id, seed)
    except TrainingDivergedError as exc:
        exc.cell_id = cell.cell_id
        logger.warning("Cell %s seed %d diverged at step %d", cell.cell_id, seed, exc.step)
        return CellRun(cell, _failed(cell, seed, exc, "training"), error=exc)
    except (ConfigError, ValidationError) as exc:
        logger.warning("Cell %s seed %d rejected: %s", cell.cell_id, seed, exc)
        return CellRun(cell, _failed(cell, seed, exc, "config"), error=exc)
    except SemalignError as exc:
        logger.warning("Cell %s seed %d failed: %s", cell.cell_id, seed, exc)
        return CellRun(cell, _failed(cell, seed, exc, "other"), error=exc)
    logger.info(
        "Cell %s seed %d: novel_acc=%.4f base_acc=%.4f",
        cell.cell_id,
        seed,
        record.novel_acc,
        record.base_acc,
    )
    return CellRun(cell, record, model, cm)


def _failed(cell: GridCell, seed: int, exc: Exception, kind: str) -> ResultRecord:
    message = f"{type(exc).__name__}: {exc}"
    if isinstance(exc, TrainingDivergedError):
        message = f"TrainingDivergedError: {exc.stage} training diverged at step {exc.step}"
    return ResultRecord(
        cell_id=cell.cell_id, seed=seed, status="failed", error=message, error_kind=kind
    )


def run_experiment_grid(
    cells: Sequence[GridCell],
    spec: SynthSpec,
    seeds: Sequence[int],
    threads: int = 1,
    on_result: Callable[[CellRun], None] | None = None,
) -> list[CellRun]:
    """
    Run every (cell, seed). on_result is called from the worker that produced
    the run; the returned list is ordered by cell, then seed, whatever the
    completion order.
    """
    if not cells:
        raise ConfigError("experiment grid has no cells")
    if not seeds:
        raise ConfigError("experiment grid has no seeds")
    jobs = [(cell, seed) for cell in cells for seed in seeds]

    def work(job: tuple[GridCell, int]) -> CellRun:
        cell, seed = job
        run = run_cell(cell, spec, seed)
        if on_result is not None:
            on_result(run)
        return run

    logger.info("Running %d cells x %d seeds on %d thread(s)", len(cells), len(seeds), threads)
    if threads <= 1:
        return [work(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, jobs))


def summarize(runs: Sequence[CellRun]) -> list[CellSummary]:
    """Mean and population std over the successful seeds of each cell, in cell order."""
    by_cell: dict[str, list[ResultRecord]] = {}
    for run in runs:
        by_cell.setdefault(run.record.cell_id, [])
        if run.record.status == "ok":
            by_cell[run.record.cell_id].append(run.record)
    summaries: list[CellSummary] = []
    for cell_id, records in by_cell.items():
        if not records:
            continue
        novel = np.array([r.novel_acc for r in records])
        base = np.array([r.base_acc for r in records])
        columns = sorted({key for r in records for key in r.pair_confusion})
        summaries.append(
            CellSummary(
                cell_id=cell_id,
                seeds=len(records),
                novel_acc_mean=float(novel.mean()),
                novel_acc_std=float(novel.std()),
                base_acc_mean=float(base.mean()),
                base_acc_std=float(base.std()),
                pair_confusion_mean={
                    key: float(np.mean([r.pair_confusion[key] for r in records]))
                    for key in columns
                },
            )
        )
    return summaries
