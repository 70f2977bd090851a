from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

from pydantic import TypeAdapter, ValidationError

from commands.common import add_config_flags, config_from_args, print_json
from errors import ConfigError
from physics.simulator import SimulationConfig, simulate
from physics.states import StateSpec
from utils.artifacts import save_records

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="write detector records (.npz) for every set of a config")
    add_config_flags(parser)
    parser.add_argument(
        "--state",
        help='single state as JSON, e.g. \'{"kind": "fock", "n": 1}\'; --out is then the .npz file',
    )
    parser.add_argument("--workers", type=int, help="threads for shard generation")
    parser.set_defaults(handler=handle)


def _parse_state(text: str):
    try:
        return TypeAdapter(StateSpec).validate_python(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"Invalid --state: {exc}") from exc


def handle(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if args.state:
        sim = SimulationConfig(state=_parse_state(args.state), lo=config.lo, n_samples=config.n_samples, seed=config.seed)
        targets = {Path(args.out or f"{sim.state.kind}.npz").stem: (sim, Path(args.out or f"{sim.state.kind}.npz"))}
    else:
        out = Path(config.output_dir) / "records"
        targets = {label: (sim, out / f"{label}.npz") for label, sim in config.state_configs().items()}
    written = {}
    for label, (sim, path) in targets.items():
        records = simulate(sim, workers=args.workers)
        save_records(records, path, {"label": label, **sim.model_dump(mode="json")})
        logger.info("Simulate: %s -> %s (%d pairs)", label, path, len(records))
        written[label] = str(path)
    print_json(written)
    return 0
