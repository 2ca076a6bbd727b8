"""synth: generate a synthetic dataset with its embedding file and split CSVs."""

import argparse
import logging
from pathlib import Path

from semalign.commands import load_config
from semalign.embeddings import write_embeddings
from semalign.harness import generate_dataset
from semalign.storage import save_dataset, write_split_csvs

logger = logging.getLogger("semalign.commands.synth")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser(
        "synth", parents=parents, help="write a synthetic dataset (configure with --set synth.*)"
    )
    parser.set_defaults(handler=cmd_synth)


def cmd_synth(args: argparse.Namespace) -> int:
    """Write dataset.json, embeddings.txt and splits/<split>.csv under --out."""
    cfg = load_config(args, seed_keys=("synth.seed",))
    data = generate_dataset(cfg.synth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(data, out / "dataset.json")
    write_embeddings(data.embedding_table, out / "embeddings.txt")
    written = write_split_csvs(data, out / "splits")
    logger.info(
        "Wrote dataset with %d classes and %d split files to %s",
        data.spec.num_classes,
        len(written),
        out,
    )
    print(out / "dataset.json")
    return 0
