"""
Command-line application factory.
Run with: semalign <margins|run|gradcheck|synth> [--config PATH] [--set KEY=VALUE ...]
"""

import argparse
import logging
import sys
from collections.abc import Sequence

from pydantic import ValidationError

from semalign import __version__
from semalign.commands import gradcheck, margins, run, synth
from semalign.config import get_settings
from semalign.exceptions import (
    ConfigError,
    EmbeddingParseError,
    GenerationError,
    GradientCheckError,
    InputFileError,
    SemalignError,
    TrainingDivergedError,
)

logger = logging.getLogger("semalign")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAINING = 3
EXIT_VERIFICATION = 4

# First matching class wins.
EXIT_CODES: tuple[tuple[type[Exception], int, str], ...] = (
    (EmbeddingParseError, EXIT_INPUT, "EMBEDDING_PARSE"),
    (InputFileError, EXIT_INPUT, "INPUT_FILE"),
    (ConfigError, EXIT_INPUT, "CONFIG"),
    (ValidationError, EXIT_INPUT, "CONFIG"),
    (GenerationError, EXIT_INPUT, "GENERATION"),
    (TrainingDivergedError, EXIT_TRAINING, "TRAINING_DIVERGED"),
    (GradientCheckError, EXIT_VERIFICATION, "GRADIENT_CHECK"),
)


def configure_logging() -> None:
    """Configure application logging from settings."""
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
    )


def exit_code_for(exc: Exception) -> tuple[int, str]:
    """Map an exception to (exit code, short code); unknown library errors count as input."""
    for exc_type, code, name in EXIT_CODES:
        if isinstance(exc, exc_type):
            return code, name
    return EXIT_INPUT, "ERROR"


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand registered."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML config file with dotted keys")
    common.add_argument(
        "--set",
        dest="overrides",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        help="override one config key (repeatable)",
    )
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--seed", type=int, metavar="N", help="seed override")

    parser = argparse.ArgumentParser(
        prog="semalign",
        description="Semantic-alignment few-shot head: margins, experiments, gradient checks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (margins, run, gradcheck, synth):
        command.register(subparsers, [common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, dispatch the subcommand and translate errors to exit codes."""
    configure_logging()
    args = create_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (SemalignError, ValidationError) as exc:
        code, name = exit_code_for(exc)
        logger.debug("Command %s failed with %s", args.command, name, exc_info=True)
        print(f"semalign {args.command}: error [{name}]: {exc}", file=sys.stderr)
        return code
