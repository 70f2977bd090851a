from __future__ import annotations

import argparse
from pathlib import Path

from commands.common import print_json
from utils.artifacts import export_plot_data, load_artifact, load_records


def register(subparsers) -> None:
    parser = subparsers.add_parser("export", help="convert records (.npz) or an artifact CSV to plot data")
    parser.add_argument("source")
    parser.add_argument("--out", required=True)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    source = Path(args.source)
    obj = load_records(source)[0] if source.suffix == ".npz" else load_artifact(source)
    files = export_plot_data(obj, args.out, args.format)
    print_json({"files": [str(p) for p in files]})
    return 0
