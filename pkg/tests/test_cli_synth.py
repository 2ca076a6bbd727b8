"""CLI tests for the synth subcommand."""

import numpy as np
import pandas as pd

from semalign.embeddings import load_embeddings
from semalign.storage import load_dataset


def test_synth_default_spec_round_trips(run_cli, tmp_path):
    """Default spec writes the dataset, embeddings and splits; embeddings reload losslessly."""
    code, _, _ = run_cli("synth", "--out", tmp_path)
    assert code == 0
    data = load_dataset(tmp_path / "dataset.json")
    table = load_embeddings(tmp_path / "embeddings.txt", normalize=False)
    assert table.names == data.class_names
    assert np.array_equal(table.vectors, data.embedding_table.vectors)
    novel = pd.read_csv(tmp_path / "splits" / "novel_train.csv")
    assert len(novel) == 5
    assert sorted(novel["label"]) == [15, 16, 17, 18, 19]


def test_synth_is_byte_deterministic(run_cli, tmp_path):
    """Two runs with the same seed write identical files."""
    for name in ("a", "b"):
        assert run_cli("synth", "--out", tmp_path / name, "--seed", "3")[0] == 0
    for relative in ("dataset.json", "embeddings.txt", "splits/test.csv"):
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()


def test_synth_shot_override(run_cli, tmp_path):
    """--set synth.shots_k controls the novel split size."""
    code, _, _ = run_cli("synth", "--out", tmp_path, "--set", "synth.shots_k=3")
    assert code == 0
    assert len(pd.read_csv(tmp_path / "splits" / "novel_train.csv")) == 15


def test_synth_infeasible_pairs_exit_2(run_cli, tmp_path):
    """A novel class with two cosine targets cannot be generated."""
    code, _, err = run_cli(
        "synth", "--out", tmp_path, "--set", "synth.similar_pairs=[[15, 3, 0.8], [15, 4, 0.8]]"
    )
    assert code == 2
    assert "GENERATION" in err


def test_synth_invalid_pair_ids_exit_2(run_cli, tmp_path):
    """Pairs must join a novel class to a base class."""
    code, _, _ = run_cli("synth", "--out", tmp_path, "--set", "synth.similar_pairs=[[2, 3, 0.8]]")
    assert code == 2
