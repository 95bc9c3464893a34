"""On-disk grid format shared by histograms, raw grids and fitted edges.

A grid is stored as two files with a common stem: ``<stem>.json`` holding
``{"m": ..., "n": ..., "scale": "density", "payload": "<stem>.bin"}`` and
``<stem>.bin`` holding ``m * m`` little-endian float64 values in row-major
order.  A plain CSV rendering is available for debugging.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, MalformedFileError

_DTYPE = np.dtype("<f8")


def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def grid_to_bytes(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype=_DTYPE).tobytes(order="C")


def grid_from_bytes(payload: bytes, shape: tuple[int, int]) -> np.ndarray:
    expected = shape[0] * shape[1] * _DTYPE.itemsize
    if len(payload) != expected:
        raise DimensionMismatchError(
            f"payload holds {len(payload) // _DTYPE.itemsize} values, header implies "
            f"{shape[0]}x{shape[1]}={shape[0] * shape[1]}"
        )
    return np.frombuffer(payload, dtype=_DTYPE).reshape(shape).astype(float)


def write_grid(path, values: np.ndarray, n: int | None = None, **meta) -> Path:
    """Write ``values`` under ``path`` (with or without suffix); returns the sidecar path."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DimensionMismatchError(f"grid must be square, got shape {values.shape}")
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path = stem.with_suffix(".bin")
    header = {"m": int(values.shape[0]), "n": n, "scale": "density", "payload": bin_path.name}
    header.update(meta)
    bin_path.write_bytes(grid_to_bytes(values))
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(header, indent=2))
    return json_path


def read_grid(path) -> tuple[np.ndarray, dict]:
    stem = _stem(path)
    json_path = stem.with_suffix(".json")
    try:
        header = json.loads(json_path.read_text())
    except FileNotFoundError:
        raise MalformedFileError(f"missing grid sidecar {json_path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"grid sidecar {json_path} is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or "m" not in header:
        raise MalformedFileError(f"grid sidecar {json_path} lacks 'm'")
    if header.get("scale", "density") != "density":
        raise MalformedFileError(f"unsupported grid scale {header.get('scale')!r}")
    try:
        m = int(header["m"])
    except (TypeError, ValueError):
        raise MalformedFileError(f"grid size {header['m']!r} is not an integer") from None
    if m < 1:
        raise MalformedFileError(f"grid size must be positive, got {m}")
    bin_path = json_path.parent / header.get("payload", stem.with_suffix(".bin").name)
    try:
        payload = bin_path.read_bytes()
    except FileNotFoundError:
        raise MalformedFileError(f"missing grid payload {bin_path}") from None
    return grid_from_bytes(payload, (m, m)), header


def write_grid_csv(path, values: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")
    return path


def read_grid_csv(path) -> np.ndarray:
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    if values.shape[0] != values.shape[1]:
        raise DimensionMismatchError(f"CSV grid must be square, got {values.shape}")
    return values
