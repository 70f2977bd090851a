from __future__ import annotations

import argparse

from commands.common import print_json
from errors import ConfigError
from physics.densities import Density1D, Density2D
from physics.inversion import fit_mu, overlap_1d, overlap_2d, vogel_criterion
from physics.states import QuadratureConvention
from utils.artifacts import load_artifact


def register(subparsers) -> None:
    parser = subparsers.add_parser("metrics", help="overlaps C/D, Vogel verdicts and mu fits on CSV artifacts")
    parser.add_argument("--overlap", nargs=2, action="append", default=[], metavar=("CSV", "THEORY_CSV"))
    parser.add_argument("--vogel", action="append", default=[], metavar="PD_CSV")
    parser.add_argument("--fit-mu", action="append", default=[], dest="fit_mu", metavar="PD_CSV")
    parser.add_argument("--sigma0", type=float, default=1.0)
    parser.set_defaults(handler=handle)


def _overlap(a, b) -> float:
    if isinstance(a, Density2D):
        return overlap_2d(a, b)
    return overlap_1d(a, b)


def _density1d(path: str) -> Density1D:
    obj = load_artifact(path)
    if not isinstance(obj, Density1D):
        raise ConfigError(f"{path} is not a 1D quadrature density.")
    return obj


def handle(args: argparse.Namespace) -> int:
    if not (args.overlap or args.vogel or args.fit_mu):
        raise ConfigError("metrics needs at least one of --overlap, --vogel, --fit-mu.")
    conv = QuadratureConvention(sigma0=args.sigma0)
    report = {
        "overlaps": [{"a": a, "b": b, "value": _overlap(load_artifact(a), load_artifact(b))} for a, b in args.overlap],
        "vogel": {p: vogel_criterion(_density1d(p), args.sigma0).to_dict() for p in args.vogel},
        "mu_hat": {p: fit_mu(_density1d(p), conv) for p in args.fit_mu},
    }
    print_json(report)
    return 0
