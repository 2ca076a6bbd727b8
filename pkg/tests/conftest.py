"""
Pytest fixtures shared across tests.
SEMALIGN_* settings are pinned in the project root conftest.py.
"""

from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from semalign.cli import main
from semalign.config import get_settings
from semalign.embeddings import ClassEmbeddingTable
from semalign.harness import DatasetSnapshot, generate_dataset, train_base
from semalign.model import ModelSnapshot
from semalign.numerics import make_rng
from semalign.schemas import ExperimentConfig, SgdConfig, SynthSpec

TINY_CONFIG_TOML = """\
seeds = [0]
inter_dim = 4
base.steps = 40
base.batch_size = 0
finetune.steps = 20
synth.num_base = 4
synth.num_novel = 2
synth.dim_raw = 8
synth.dim_feat = 6
synth.dim_text = 6
synth.similar_pairs = [[4, 1, 0.85]]
synth.base_per_class = 20
synth.test_per_class = 10
"""


@pytest.fixture(autouse=True)
def reset_settings():
    """Drop cached settings so monkeypatched SEMALIGN_* variables take effect."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    """Deterministic generator for building random test inputs."""
    return make_rng(1234, 7)


@pytest.fixture
def make_table() -> Callable[..., ClassEmbeddingTable]:
    """Factory for normalized embedding tables from explicit rows or random draws."""

    def _make_table(
        vectors: Sequence[Sequence[float]] | np.ndarray | None = None,
        names: Sequence[str] | None = None,
        classes: int = 5,
        dim: int = 4,
        seed: int = 0,
    ) -> ClassEmbeddingTable:
        if vectors is None:
            vectors = make_rng(seed, 3).standard_normal((classes, dim))
        vectors = np.asarray(vectors, dtype=np.float64)
        if names is None:
            names = [f"c{i}" for i in range(vectors.shape[0])]
        return ClassEmbeddingTable(tuple(names), vectors).normalized()

    return _make_table


@pytest.fixture
def tiny_spec() -> SynthSpec:
    """Six classes (four base, two novel) with one engineered similar pair."""
    return SynthSpec(
        num_base=4,
        num_novel=2,
        dim_raw=8,
        dim_feat=6,
        dim_text=6,
        similar_pairs=[(4, 1, 0.85)],
        base_per_class=20,
        test_per_class=10,
    )


@pytest.fixture
def fast_config() -> ExperimentConfig:
    """Short training schedules for tests that only check contracts."""
    return ExperimentConfig(
        inter_dim=4,
        base=SgdConfig(learning_rate=0.1, momentum=0.9, steps=40, batch_size=0),
        finetune=SgdConfig(learning_rate=0.05, momentum=0.9, steps=20),
        seeds=[0, 1],
    )


@pytest.fixture
def tiny_dataset(tiny_spec) -> DatasetSnapshot:
    return generate_dataset(tiny_spec)


@pytest.fixture
def base_model(tiny_dataset, fast_config) -> ModelSnapshot:
    """Base-stage model trained on the tiny dataset."""
    return train_base(tiny_dataset, fast_config, seed=0)


@pytest.fixture
def write_config(tmp_path) -> Callable[..., Path]:
    """Factory writing a TOML config file (tiny schedules by default)."""

    def _write_config(text: str = TINY_CONFIG_TOML, name: str = "config.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write_config


@pytest.fixture
def run_cli(capsys) -> Callable[..., tuple[int, str, str]]:
    """Invoke the CLI in-process; returns (exit code, stdout, stderr)."""

    def _run_cli(*argv: Any) -> tuple[int, str, str]:
        code = main([str(arg) for arg in argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return _run_cli
