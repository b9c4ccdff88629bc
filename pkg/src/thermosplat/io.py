"""File formats: PFM rasters (degrees C), binary checkpoints, CSV tables.

PFM follows the Portable FloatMap convention: grayscale ``Pf`` header,
negative scale for little-endian float32, rows stored bottom to top.
Checkpoints are a versioned header plus named float64 little-endian arrays
described by a JSON manifest.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError

CKPT_MAGIC = b"TSPLATCK"
CKPT_VERSION = 1


def write_pfm(path: str | Path, values: NDArray[np.float64]) -> None:
    """Write a single-channel float raster; values are degrees Celsius."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValidationError(f"pfm: expected a 2-D raster, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(arr[::-1].astype("<f4").tobytes())


def read_pfm(path: str | Path) -> NDArray[np.float64]:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"pfm file not found: {p}")
    data = p.read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"Pf":
        raise ValidationError(f"{p}: not a grayscale PFM file")
    try:
        w, h = (int(v) for v in parts[1].split())
        scale = float(parts[2])
    except ValueError as exc:
        raise ValidationError(f"{p}: malformed PFM header") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    payload = parts[3]
    expected = w * h * 4
    if len(payload) < expected:
        raise ValidationError(f"{p}: truncated PFM payload")
    arr = np.frombuffer(payload[:expected], dtype=dtype).reshape(h, w)
    return arr[::-1].astype(np.float64)


def save_checkpoint(path: str | Path, arrays: dict[str, NDArray[np.float64]], meta: dict) -> None:
    """Versioned header + manifest + concatenated float64 LE payload."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        blob = np.ascontiguousarray(arrays[name], dtype="<f8").tobytes()
        entries.append(
            {"name": name, "shape": list(np.asarray(arrays[name]).shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"arrays": entries, "meta": meta}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, NDArray[np.float64]], dict]:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"checkpoint not found: {p}")
    raw = p.read_bytes()
    if raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValidationError(f"{p}: not a checkpoint file (bad magic)")
    pos = len(CKPT_MAGIC)
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != CKPT_VERSION:
        raise ValidationError(f"{p}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    try:
        manifest = json.loads(raw[pos : pos + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{p}: corrupt checkpoint manifest") from exc
    pos += mlen
    arrays = {}
    for entry in manifest["arrays"]:
        start = pos + entry["offset"]
        blob = raw[start : start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f8").reshape(entry["shape"]).copy()
    return arrays, manifest["meta"]


def format_float(x: float) -> str:
    """Shortest decimal that round-trips the double exactly."""
    return repr(float(x))


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = [format_float(v) if isinstance(v, float) else str(v) for v in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def read_json(path: str | Path):
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON: {exc}") from exc
