from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from config import PipelineConfig, load_config
from errors import ConfigError


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config file (JSON or YAML)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--samples", type=int, help="detector pairs per simulated set")
    parser.add_argument("--excess-db", type=float, dest="excess_db", help="LO excess noise in dB")
    parser.add_argument(
        "--mu",
        type=float,
        action="append",
        help="PRCS mean photon number; once for single-mu runs, twice for the two-mu correlation inversion",
    )
    parser.add_argument("--eta", type=float, help="common detector efficiency in (0, 1]")


def mu_overrides(mus: Optional[list[float]]) -> dict:
    if not mus:
        return {}
    if len(mus) > 2:
        raise ConfigError("--mu takes at most two values.")
    return {"joint_mus": [0.0, mus[0]], "correlation_mus": [0.0, *mus]}


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    return load_config(
        getattr(args, "config", None),
        seed=args.seed,
        output_dir=args.out,
        n_samples=args.samples,
        excess_db=args.excess_db,
        eta=args.eta,
        **mu_overrides(args.mu),
    )


def print_json(data) -> None:
    json.dump(data, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
