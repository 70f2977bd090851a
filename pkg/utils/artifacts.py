"""
Artifact persistence: detector records as .npz, statistical objects as CSV.

Every CSV starts with one `# {json}` comment line carrying the metadata needed
to rebuild the object; floats are written with repr so save -> load is bitwise.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import zipfile
from pathlib import Path
from typing import Optional, Union

import numpy as np

from errors import ArtifactIOError
from physics.densities import Axis, CorrelationDensity, Density1D, Density2D, StatObject
from physics.simulator import DetectorRecords

PathLike = Union[str, Path]

# Fixed member timestamp so identical arrays give identical archives.
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _fmt(v: float) -> str:
    return repr(float(v))


def _parse(s: str) -> float:
    return float(s) if s != "" else math.nan


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise ArtifactIOError(f"Cannot hash artifact: {exc.strerror}", path=path) from exc
    return h.hexdigest()


def artifact_kind(obj) -> str:
    if isinstance(obj, DetectorRecords):
        return "records"
    if isinstance(obj, Density1D):
        return "density1d"
    if isinstance(obj, Density2D):
        return "density2d"
    if isinstance(obj, CorrelationDensity):
        return "correlation"
    raise TypeError(f"Not a persistable artifact: {type(obj).__name__}")


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise ArtifactIOError(f"Cannot write artifact: {exc.strerror}", path=path) from exc


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ArtifactIOError(f"Cannot read artifact: {exc.strerror}", path=path) from exc


def _common_meta(obj: StatObject) -> dict:
    return {
        "kind": artifact_kind(obj),
        "provenance": obj.provenance,
        "n_samples": obj.n_samples,
        "overflow": int(obj.overflow),
        "has_stderr": obj.stderr is not None,
    }


def _rows_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _meta_line(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def stderr_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".stderr" + p.suffix)


def _matrix_csv(x_axis: Axis, y_axis: Axis, values: np.ndarray) -> str:
    header = ["x\\y"] + [_fmt(v) for v in y_axis.centers]
    rows = ([_fmt(x)] + [_fmt(v) for v in row] for x, row in zip(x_axis.centers, values))
    return _rows_csv(header, rows)


def save_artifact(obj: StatObject, path: PathLike) -> list[Path]:
    """
    Write a statistical object as CSV. Returns every file written (2D maps with
    standard errors get a `<name>.stderr.csv` sibling in the same matrix layout).
    """
    path = Path(path)
    meta = _common_meta(obj)
    written = [path]
    if isinstance(obj, Density2D):
        meta.update(x_axis=obj.x_axis.to_dict(), y_axis=obj.y_axis.to_dict())
        _write_text(path, _meta_line(meta) + _matrix_csv(obj.x_axis, obj.y_axis, obj.values))
        if obj.stderr is not None:
            side = stderr_path(path)
            _write_text(side, _meta_line({"kind": "density2d_stderr"}) + _matrix_csv(obj.x_axis, obj.y_axis, obj.stderr))
            written.append(side)
        return written

    err = obj.stderr if obj.stderr is not None else [None] * obj.axis.n_bins
    rows = ([_fmt(c), _fmt(v), "" if e is None else _fmt(e)] for c, v, e in zip(obj.centers, obj.values, err))
    meta["axis"] = obj.axis.to_dict()
    if isinstance(obj, CorrelationDensity):
        meta.update(epsilon=obj.epsilon, excluded_mass=obj.excluded_mass)
        header = ["m", "density", "stderr"]
    else:
        header = ["x", "density", "stderr"]
    _write_text(path, _meta_line(meta) + _rows_csv(header, rows))
    return written


def read_metadata(path: PathLike) -> dict:
    lines = _read_lines(Path(path))
    if not lines or not lines[0].startswith("#"):
        raise ArtifactIOError("Missing metadata comment line", path=path)
    try:
        return json.loads(lines[0][1:].strip())
    except json.JSONDecodeError as exc:
        raise ArtifactIOError(f"Malformed metadata line: {exc.msg}", path=path) from exc


def _read_matrix(path: Path, shape: tuple[int, int]) -> np.ndarray:
    rows = list(csv.reader(_read_lines(path)[2:]))
    values = np.array([[_parse(s) for s in row[1:]] for row in rows], dtype=float)
    if values.shape != shape:
        raise ArtifactIOError(f"Matrix has shape {values.shape}, expected {shape}", path=path)
    return values


def load_artifact(path: PathLike) -> StatObject:
    """Inverse of save_artifact."""
    path = Path(path)
    meta = read_metadata(path)
    kind = meta.get("kind")
    common = {"provenance": meta["provenance"], "n_samples": meta.get("n_samples"), "overflow": meta.get("overflow", 0)}
    try:
        if kind == "density2d":
            x_axis, y_axis = Axis.from_dict(meta["x_axis"]), Axis.from_dict(meta["y_axis"])
            shape = (x_axis.n_bins, y_axis.n_bins)
            stderr = _read_matrix(stderr_path(path), shape) if meta.get("has_stderr") else None
            return Density2D(x_axis=x_axis, y_axis=y_axis, values=_read_matrix(path, shape), stderr=stderr, **common)
        if kind not in ("density1d", "correlation"):
            raise ArtifactIOError(f"Unknown artifact kind {kind!r}", path=path)
        axis = Axis.from_dict(meta["axis"])
        rows = list(csv.reader(_read_lines(path)[2:]))
        if len(rows) != axis.n_bins:
            raise ArtifactIOError(f"Expected {axis.n_bins} rows, found {len(rows)}", path=path)
        values = np.array([_parse(r[1]) for r in rows])
        stderr = np.array([_parse(r[2]) for r in rows]) if meta.get("has_stderr") else None
        if kind == "correlation":
            return CorrelationDensity(axis=axis, values=values, epsilon=meta["epsilon"], stderr=stderr, **common)
        return Density1D(axis=axis, values=values, stderr=stderr, **common)
    except (KeyError, IndexError, ValueError) as exc:
        raise ArtifactIOError(f"Corrupt {kind} artifact: {exc}", path=path) from exc


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_records(records: DetectorRecords, path: PathLike, metadata: Optional[dict] = None) -> Path:
    """
    Records as an .npz archive (`i1`, `i2`, `metadata` as a JSON string) that
    np.load reads directly. Members carry a fixed timestamp.
    """
    path = Path(path)
    members = {
        "i1": records.i1,
        "i2": records.i2,
        "metadata": np.array(json.dumps(metadata or {}, sort_keys=True)),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            for name, arr in members.items():
                zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_ZIP_EPOCH), _npy_bytes(arr))
    except OSError as exc:
        raise ArtifactIOError(f"Cannot write records: {exc.strerror}", path=path) from exc
    return path


def load_records(path: PathLike) -> tuple[DetectorRecords, dict]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            records = DetectorRecords(data["i1"], data["i2"])
            meta = json.loads(str(data["metadata"])) if "metadata" in data.files else {}
    except OSError as exc:
        raise ArtifactIOError(f"Cannot read records: {exc}", path=path) from exc
    except (KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise ArtifactIOError(f"Corrupt records archive: {exc}", path=path) from exc
    return records, meta


def _json_safe(values: np.ndarray):
    return [None if not math.isfinite(v) else float(v) for v in np.ravel(values)]


def to_json_dict(obj: StatObject) -> dict:
    out = _common_meta(obj)
    if isinstance(obj, Density2D):
        out.update(
            x_axis=obj.x_axis.to_dict(),
            y_axis=obj.y_axis.to_dict(),
            x=obj.x_axis.centers.tolist(),
            y=obj.y_axis.centers.tolist(),
            values=[_json_safe(row) for row in obj.values],
        )
        return out
    out.update(axis=obj.axis.to_dict(), centers=obj.centers.tolist(), values=_json_safe(obj.values))
    if obj.stderr is not None:
        out["stderr"] = _json_safe(obj.stderr)
    if isinstance(obj, CorrelationDensity):
        out.update(epsilon=obj.epsilon, excluded_mass=obj.excluded_mass)
    return out


def write_json(data: dict, path: PathLike) -> Path:
    path = Path(path)
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: PathLike) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"Cannot read JSON: {exc.strerror}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ArtifactIOError(f"Malformed JSON: {exc.msg}", path=path) from exc


def export_plot_data(obj: Union[StatObject, DetectorRecords], path: PathLike, fmt: str = "csv") -> list[Path]:
    """
    Plot data for a statistical object (CSV or JSON). Detector records export
    as an `i1,i2` table.
    """
    path = Path(path)
    if isinstance(obj, DetectorRecords):
        if fmt != "csv":
            raise ValueError("Detector records export only as CSV.")
        rows = ([_fmt(a), _fmt(b)] for a, b in zip(obj.i1, obj.i2))
        _write_text(path, _rows_csv(["i1", "i2"], rows))
        return [path]
    if fmt == "csv":
        return save_artifact(obj, path)
    if fmt == "json":
        return [write_json(to_json_dict(obj), path)]
    raise ValueError(f"Unknown export format {fmt!r}; use csv or json.")
