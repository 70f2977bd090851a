from __future__ import annotations

import argparse

from commands.common import print_json
from errors import ArtifactIOError
from utils.manifest import verify_manifest


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="recompute artifact hashes against a run manifest")
    parser.add_argument("manifest", help="manifest.json or the run directory holding it")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    bad = verify_manifest(args.manifest)
    print_json({"manifest": args.manifest, "mismatched": bad})
    if bad:
        raise ArtifactIOError(f"{len(bad)} artifact(s) missing or modified", path=args.manifest)
    return 0
