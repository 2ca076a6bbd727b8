"""gradcheck: finite-difference check of every trainable parameter group."""

import argparse
import logging

from semalign.verification import TOLERANCE, SuiteDims, assert_gradients, run_gradient_suite

logger = logging.getLogger("semalign.commands.gradcheck")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser(
        "gradcheck", parents=parents, help="compare analytic gradients with finite differences"
    )
    parser.add_argument(
        "--dims", default=None, metavar="N,C,D_raw,D_feat,D_text,d", help="problem size"
    )
    parser.add_argument("--seeds", type=int, default=20, help="number of random problems")
    parser.set_defaults(handler=cmd_gradcheck)


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Print the worst relative error per group; exit 4 when any reaches the tolerance."""
    dims = SuiteDims.parse(args.dims) if args.dims else SuiteDims()
    errors = run_gradient_suite(seed=args.seed or 0, dims=dims, seeds=args.seeds)
    for name, err in errors.items():
        status = "ok" if err < TOLERANCE else "FAIL"
        print(f"{name:<16} {err:.3e} {status}")
    assert_gradients(errors, TOLERANCE)
    return 0
