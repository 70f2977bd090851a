from __future__ import annotations

import argparse
from pathlib import Path

from commands.common import print_json
from config import load_config
from errors import ConfigError
from physics.densities import estimate_density_1d, estimate_sigma0
from physics.reconstruction import reconstruct_joint_ideal, reconstruct_w0
from utils.artifacts import load_records, save_artifact


def register(subparsers) -> None:
    parser = subparsers.add_parser("reconstruct", help="P_D, ideal-LO P0 and w0 CSVs from record files")
    parser.add_argument("records", nargs="+", help=".npz record files")
    parser.add_argument("--vacuum", help="vacuum records used to calibrate sigma0")
    parser.add_argument("--sigma0", type=float, help="shot-noise scale, instead of --vacuum")
    parser.add_argument("--config", help="pipeline config supplying grids and the exclusion window")
    parser.add_argument("--out", default=".", help="output directory")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.sigma0:
        sigma0 = args.sigma0
    elif args.vacuum:
        sigma0 = estimate_sigma0(load_records(args.vacuum)[0])
    else:
        raise ConfigError("reconstruct needs --vacuum records or --sigma0.")
    grids = config.grids
    q_axis = grids.quadrature.axis(sigma0)
    j_axis = grids.joint.axis(sigma0)
    m_axis = grids.correlation.axis(sigma0**2)
    out = Path(args.out)
    written = {"sigma0": sigma0, "files": []}
    for path in args.records:
        records, _ = load_records(path)
        name = Path(path).stem
        p_d = estimate_density_1d(records.d, q_axis)
        objs = {
            f"pd_{name}": p_d,
            f"p0_{name}": reconstruct_joint_ideal(p_d, sigma0, j_axis),
            f"w0_{name}": reconstruct_w0(p_d, sigma0, m_axis, epsilon=config.epsilon * sigma0**2),
        }
        for stem, obj in objs.items():
            written["files"] += [str(p) for p in save_artifact(obj, out / f"{stem}.csv")]
    print_json(written)
    return 0
