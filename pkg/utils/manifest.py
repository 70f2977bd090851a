from __future__ import annotations

import logging
import platform
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pydantic
import scipy

from utils.artifacts import PathLike, read_json, sha256_file, write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def library_versions() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def write_manifest(
    out_dir: PathLike,
    *,
    scenario: str,
    seed: int,
    config: dict,
    artifacts: Iterable[tuple[PathLike, str]],
    metrics: dict,
    name: str = MANIFEST_NAME,
) -> Path:
    """
    manifest.json listing every artifact (path relative to out_dir, sha256, kind)
    together with the config echo and headline metrics. No timestamps, so a
    repeated run reproduces it byte for byte.
    """
    out_dir = Path(out_dir)
    entries = []
    for path, kind in artifacts:
        p = Path(path)
        entries.append({"path": p.relative_to(out_dir).as_posix(), "sha256": sha256_file(p), "kind": kind})
    entries.sort(key=lambda e: e["path"])
    data = {
        "scenario": scenario,
        "seed": int(seed),
        "config": config,
        "versions": library_versions(),
        "artifacts": entries,
        "metrics": metrics,
    }
    return write_json(data, out_dir / name)


def verify_manifest(path: PathLike) -> list[str]:
    """
    Recompute every artifact hash; returns the manifest paths that are missing
    or whose content changed (empty when the run is intact).
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    data = read_json(path)
    bad: list[str] = []
    for entry in data.get("artifacts", []):
        target = path.parent / entry["path"]
        digest: Optional[str] = sha256_file(target) if target.is_file() else None
        if digest != entry["sha256"]:
            logger.warning("Manifest: %s %s", entry["path"], "missing" if digest is None else "hash mismatch")
            bad.append(entry["path"])
    return bad
