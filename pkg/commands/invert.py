from __future__ import annotations

import argparse
from pathlib import Path

from commands.common import print_json
from errors import ConfigError
from physics.inversion import invert_single_mu, invert_two_mu
from physics.simulator import effective_mu
from utils.artifacts import load_artifact, save_artifact


def register(subparsers) -> None:
    parser = subparsers.add_parser("invert", help="Fock-1 (and Fock-2) statistics from vacuum + PRCS CSVs")
    parser.add_argument("vacuum", help="vacuum statistic (CSV)")
    parser.add_argument("prcs", nargs="+", help="one or two PRCS statistics (CSV), in --mu order")
    parser.add_argument("--mu", type=float, action="append", required=True)
    parser.add_argument("--eta", type=float, default=1.0)
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--prefix", default="fock", help="output name prefix")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    if len(args.prcs) != len(args.mu) or len(args.mu) not in (1, 2):
        raise ConfigError("invert takes one or two PRCS files with one --mu each.")
    l0 = load_artifact(args.vacuum)
    inputs = [load_artifact(p) for p in args.prcs]
    mus = [effective_mu(m, args.eta) for m in args.mu]
    if len(mus) == 1:
        result = invert_single_mu(l0, inputs[0], mus[0])
    else:
        result = invert_two_mu(l0, inputs[0], inputs[1], mus[0], mus[1])
    out = Path(args.out)
    files = save_artifact(result.l1, out / f"{args.prefix}1.csv")
    if result.l2 is not None:
        files += save_artifact(result.l2, out / f"{args.prefix}2.csv")
    print_json(
        {
            "mus_used": list(result.mus_used),
            "total_mass_l1": result.total_mass_l1,
            "total_mass_l2": result.total_mass_l2,
            "files": [str(p) for p in files],
        }
    )
    return 0
