"""Run records and CSV ingestion for the command-line tools."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedFileError, ParseError

RECORD_SUFFIX = ".record.json"


def tool_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunRecord:
    command: str
    argv: list[str]
    config: dict
    seed: int
    metrics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    artifact_paths: list[str] = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    cwd: str = ""
    tool_version: str = field(default_factory=tool_version)
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedFileError(f"run record is not valid JSON: {exc}") from exc
        try:
            return cls(**data)
        except TypeError as exc:
            raise MalformedFileError(f"run record has unexpected fields: {exc}") from exc

    def save(self, out_dir) -> Path:
        path = Path(out_dir) / f"{self.command}{RECORD_SUFFIX}"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_json(Path(path).read_text())


def jsonable(obj):
    """Convert numpy containers and scalars to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def metric_diff(expected, actual, path: str = "") -> list[str]:
    """Paths at which two metric trees differ (floats compared bit for bit)."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        out = []
        for key in sorted(set(expected) | set(actual)):
            if key not in expected or key not in actual:
                out.append(f"{path}/{key}")
            else:
                out.extend(metric_diff(expected[key], actual[key], f"{path}/{key}"))
        return out
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            return [path]
        out = []
        for i, (a, b) in enumerate(zip(expected, actual)):
            out.extend(metric_diff(a, b, f"{path}[{i}]"))
        return out
    if isinstance(expected, float) and isinstance(actual, float):
        same = (math.isnan(expected) and math.isnan(actual)) or expected.hex() == actual.hex()
        return [] if same else [path]
    return [] if expected == actual else [path]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def ingest_csv(path, has_header: bool = False) -> np.ndarray:
    """Read a rectangular numeric CSV into an ``(n, d)`` array.

    Blank, non-numeric and non-finite cells raise :class:`ParseError` citing
    the 1-based file line and column.
    """
    rows: list[list[float]] = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise MalformedFileError(f"cannot open {path}: {exc}") from exc
    with fh:
        for line_no, fields in enumerate(csv.reader(fh), start=1):
            if line_no == 1 and has_header:
                width = len(fields)
                continue
            if not fields:  # empty line
                continue
            if width is None:
                width = len(fields)
            if len(fields) != width:
                raise ParseError(f"expected {width} fields, found {len(fields)}", line_no, min(len(fields), width) + 1)
            row = []
            for col_no, text in enumerate(fields, start=1):
                text = text.strip()
                if not text:
                    raise ParseError("blank cell", line_no, col_no)
                try:
                    value = float(text)
                except ValueError:
                    raise ParseError(f"not a number: {text!r}", line_no, col_no) from None
                if not math.isfinite(value):
                    raise ParseError(f"non-finite value {text!r}", line_no, col_no)
                row.append(value)
            rows.append(row)
    if not rows:
        raise MalformedFileError(f"{path} contains no data rows")
    return np.asarray(rows, dtype=float)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_table(path_stem, rows: list[dict], fmt: str) -> Path:
    """Write dict rows as ``<stem>.json`` or ``<stem>.csv``."""
    stem = Path(path_stem)
    if fmt == "csv":
        header = list(rows[0]) if rows else []
        return write_csv(stem.with_suffix(".csv"), header, ([r.get(k) for k in header] for r in rows))
    path = stem.with_suffix(".json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(rows), indent=2))
    return path
