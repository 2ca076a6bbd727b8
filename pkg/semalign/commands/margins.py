"""margins: similarity and margin matrices of an embedding file."""

import argparse
import logging
from pathlib import Path

import pandas as pd

from semalign.commands import load_config
from semalign.embeddings import (
    ClassEmbeddingTable,
    load_embeddings,
    margin_matrix,
    similarity_matrix,
    topk_similar,
)
from semalign.numerics import Matrix

logger = logging.getLogger("semalign.commands.margins")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser(
        "margins", parents=parents, help="write similarity and margin matrices of an embedding file"
    )
    parser.add_argument("--embeddings", required=True, metavar="PATH", help="embedding text file")
    parser.add_argument("--gamma", type=float, help="similarity threshold (default: config gamma)")
    parser.add_argument(
        "--k", dest="k_similar", help="similar classes per row, integer or 'all' (default: config)"
    )
    parser.set_defaults(handler=cmd_margins)


def _matrix_frame(table: ClassEmbeddingTable, values: Matrix) -> pd.DataFrame:
    frame = pd.DataFrame(values, index=list(table.names), columns=list(table.names))
    frame.index.name = "class"
    return frame


def cmd_margins(args: argparse.Namespace) -> int:
    """Write similarity.csv and margins.csv; print each class's top-k similar classes."""
    overrides = []
    if args.gamma is not None:
        overrides.append(f"gamma={args.gamma!r}")
    if args.k_similar is not None:
        overrides.append(f"k_similar={args.k_similar}")
    args.overrides = [*args.overrides, *overrides]
    cfg = load_config(args)

    table = load_embeddings(args.embeddings)
    similarity = similarity_matrix(table)
    margins = margin_matrix(table, cfg.gamma, cfg.top_k)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _matrix_frame(table, similarity).to_csv(out / "similarity.csv", lineterminator="\n")
    _matrix_frame(table, margins.values).to_csv(out / "margins.csv", lineterminator="\n")
    logger.info("Wrote similarity.csv and margins.csv to %s", out)

    for i, name in enumerate(table.names):
        neighbours = topk_similar(similarity, i, cfg.top_k)
        rendered = ", ".join(
            f"{table.names[j]}={similarity[i, j]:.4f}" + ("*" if margins.values[i, j] else "")
            for j in neighbours
        )
        print(f"{name}: {rendered}")
    return 0
