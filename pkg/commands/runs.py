from __future__ import annotations

import argparse

from commands.common import print_json
from utils.ledger import list_runs


def register(subparsers) -> None:
    parser = subparsers.add_parser("runs", help="list recorded pipeline runs")
    parser.add_argument("--db", help="ledger database URL (default BHD_RUNS_DATABASE_URL or local SQLite)")
    parser.add_argument("--limit", type=int, default=20)
    parser.add_argument("--scenario")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    print_json(list_runs(args.db, limit=args.limit, scenario=args.scenario))
    return 0
