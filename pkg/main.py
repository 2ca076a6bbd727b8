"""Command-line entry point: python main.py <margins|run|gradcheck|synth> ..."""

import sys

from semalign.cli import main

if __name__ == "__main__":
    sys.exit(main())
