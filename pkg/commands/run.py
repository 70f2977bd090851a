from __future__ import annotations

import argparse

from commands.common import add_config_flags, config_from_args, print_json
from pipeline import run_pipeline


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="full pipeline: simulate, reconstruct, invert, score")
    add_config_flags(parser)
    parser.add_argument("--scenario", help="scenario name recorded in the manifest and ledger")
    parser.add_argument("--no-ledger", action="store_true", help="do not record the run in the ledger")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    updates = {}
    if args.scenario:
        updates["scenario"] = args.scenario
    if args.no_ledger:
        updates["record_ledger"] = False
    if updates:
        config = config.model_copy(update=updates)
    result = run_pipeline(config)
    print_json(
        {
            "exit_code": result.exit_code,
            "out_dir": str(result.out_dir),
            "manifest": str(result.manifest) if result.manifest else None,
            "metrics": result.metrics,
            "error": result.error,
        }
    )
    return result.exit_code
