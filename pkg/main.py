from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv


def build_parser() -> argparse.ArgumentParser:
    from commands import export, invert, metrics, reconstruct, run, runs, simulate, verify

    parser = argparse.ArgumentParser(
        prog="bhd",
        description="Ideal-LO homodyne statistics and Fock-state inversion from noisy-LO detector records.",
    )
    subparsers = parser.add_subparsers(dest="verb", required=True)
    for verb in (simulate, reconstruct, invert, metrics, run, export, verify, runs):
        verb.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    # .env must be loaded before modules read their os.getenv defaults.
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("BHD_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)

    from errors import BhdError

    args = build_parser().parse_args(argv)
    try:
        return int(args.handler(args))
    except BhdError as exc:
        logging.getLogger("bhd").error("%s: %s", args.verb, exc)
        return exc.exit_code
    except ValueError as exc:
        logging.getLogger("bhd").error("%s: %s", args.verb, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
