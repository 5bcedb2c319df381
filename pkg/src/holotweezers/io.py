"""File formats: 8-bit PGM masks with JSON sidecars, CSV tables, spot-pattern JSON.

All writers go through a temp file in the target directory followed by
``os.replace`` so a reader never sees a half-written file.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameterError
from .holography import BlazeSpec, QuantizedMask, SpotPattern

UM = 1e-6


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip form, always '.' decimal
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise InvalidParameterError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json_text(obj))


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


# --- PGM ---------------------------------------------------------------

def pgm_bytes(levels: np.ndarray) -> bytes:
    levels = np.asarray(levels)
    if levels.ndim != 2 or levels.dtype != np.uint8:
        raise InvalidParameterError("PGM export needs a 2D uint8 array")
    h, w = levels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(levels).tobytes()


def write_pgm(path, mask: QuantizedMask | np.ndarray) -> Path:
    levels = mask.levels if isinstance(mask, QuantizedMask) else mask
    return atomic_write_bytes(path, pgm_bytes(levels))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1  # single whitespace before the raster
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5" or maxval != 255:
        raise InvalidParameterError(f"{path}: only 8-bit binary PGM (P5, maxval 255) is supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).copy()


def mask_sidecar(mask: QuantizedMask, blaze: BlazeSpec | None, seed: int, config_hash: str, **extra) -> dict:
    return {
        "pitch_m": mask.pitch,
        "shape": list(mask.levels.shape),
        "levels": 256,
        "level_to_phase": "phase = 2*pi*level/256",
        "blaze": None if blaze is None else {"period_px": blaze.period, "orientation_rad": blaze.orientation},
        "seed": seed,
        "config_hash": config_hash,
        **extra,
    }


def write_mask(path, mask: QuantizedMask, blaze: BlazeSpec | None, seed: int, config_hash: str, **extra):
    """PGM plus ``<name>.json`` sidecar; returns both paths."""
    path = Path(path)
    pgm = write_pgm(path, mask)
    side = write_json(path.with_suffix(".json"), mask_sidecar(mask, blaze, seed, config_hash, **extra))
    return pgm, side


# --- spot patterns and paths (micrometres on disk) -----------------------

def pattern_to_json(pattern: SpotPattern) -> dict:
    return {"units": "um", "spots": [{"x": float(x / UM), "y": float(y / UM), "weight": float(w)}
                                     for x, y, w in pattern.spots]}


def pattern_from_json(obj) -> SpotPattern:
    """Accepts ``{"spots": [{"x":..,"y":..,"weight":..}, ...]}`` or a bare list of ``[x, y]`` pairs, in um."""
    spots = obj["spots"] if isinstance(obj, dict) else obj
    rows = []
    for s in spots:
        if isinstance(s, dict):
            rows.append((s["x"] * UM, s["y"] * UM, s.get("weight", 1.0)))
        else:
            rows.append((s[0] * UM, s[1] * UM, s[2] if len(s) > 2 else 1.0))
    return SpotPattern(np.array(rows, dtype=float))


def path_to_json(path_xy) -> dict:
    return {"units": "um", "path": [[float(x / UM), float(y / UM)] for x, y in np.asarray(path_xy)]}


def path_from_json(obj) -> np.ndarray:
    pts = obj["path"] if isinstance(obj, dict) else obj
    arr = np.asarray(pts, dtype=float).reshape(-1, 2)
    return arr * UM
