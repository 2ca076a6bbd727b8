"""Subcommands; each module exposes register(subparsers, parents) and a cmd_* handler."""

import argparse
from collections.abc import Sequence

from semalign.config import load_cli_config
from semalign.schemas import CliConfig


def load_config(args: argparse.Namespace, seed_keys: Sequence[str] = ()) -> CliConfig:
    """Config file plus --set overrides; --seed N is applied as one more override per key."""
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.extend(f"{key}={value}" for key, value in _seed_values(args.seed, seed_keys))
    return load_cli_config(args.config, overrides)


def _seed_values(seed: int, keys: Sequence[str]) -> list[tuple[str, str]]:
    return [(key, f"[{seed}]" if key == "seeds" else str(seed)) for key in keys]
