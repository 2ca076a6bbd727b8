"""run: train and evaluate an experiment grid into a config-hash-named directory."""

import argparse
import logging
from pathlib import Path

from semalign.commands import load_config
from semalign.config import config_hash, echo_config, get_settings
from semalign.exceptions import TrainingDivergedError
from semalign.grid import CellRun, build_grid, run_experiment_grid, summarize
from semalign.metrics import write_confusion_csv
from semalign.storage import (
    save_model,
    write_failures_csv,
    write_results_csv,
    write_summary_csv,
)

logger = logging.getLogger("semalign.commands.run")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser(
        "run", parents=parents, help="run the configured experiment grid over all seeds"
    )
    parser.set_defaults(handler=cmd_run)


def artifact_stem(run: CellRun) -> str:
    """File stem of a (cell, seed) artifact; path separators in cell ids are replaced."""
    cell = run.record.cell_id.replace("/", "_").replace("\\", "_")
    return f"{cell}__seed{run.record.seed}"


def cell_writer(out_dir: Path):
    """Per-run artifact writer, called from the worker that produced the run."""
    confusion_dir = out_dir / "confusion"
    models_dir = out_dir / "models"
    confusion_dir.mkdir(parents=True, exist_ok=True)
    models_dir.mkdir(parents=True, exist_ok=True)

    def write(run: CellRun) -> None:
        if run.model is None or run.confusion is None:
            return
        stem = artifact_stem(run)
        write_confusion_csv(run.confusion, confusion_dir / f"{stem}.csv")
        write_confusion_csv(run.confusion, confusion_dir / f"{stem}.normalized.csv", True)
        save_model(run.model, models_dir / f"{stem}.json")

    return write


def cmd_run(args: argparse.Namespace) -> int:
    """
    Run every (cell, seed) and write all artifacts, failed cells included.
    Afterwards a diverged cell is re-raised first (exit 3), then any other failure.
    """
    cfg = load_config(args, seed_keys=("seeds",))
    echo = echo_config(cfg)
    out_dir = Path(args.out) / config_hash(echo)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.toml").write_text(echo, encoding="utf-8", newline="\n")

    cells = build_grid(cfg.experiment(), cfg.grid)
    threads = get_settings().threads
    runs = run_experiment_grid(cells, cfg.synth, cfg.seeds, threads, cell_writer(out_dir))

    write_results_csv(runs, out_dir / "results.csv")
    write_summary_csv(summarize(runs), out_dir / "summary.csv")
    failures_path = out_dir / "failures.csv"
    if not write_failures_csv(runs, failures_path):
        failures_path.unlink(missing_ok=True)
    logger.info("Wrote %d results to %s", len(runs), out_dir)
    print(out_dir)

    errors = [run.error for run in runs if run.error is not None]
    diverged = [exc for exc in errors if isinstance(exc, TrainingDivergedError)]
    if diverged or errors:
        raise (diverged or errors)[0]
    return 0
