"""HARW1 windowed-dataset files.

Layout, little-endian throughout::

    b"HARW1"
    u64 n_train, n_val, n_test, n_channels, window_len, n_classes
    per window (train, then val, then test): f32[n_channels * window_len], u16 label

Standardization statistics and split boundaries go to a JSON sidecar next to
the binary file (``<path>.json``).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dataset import SPLITS, Dataset

MAGIC = b"HARW1"
_HEADER = struct.Struct("<6Q")


class HARWError(ValueError):
    pass


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_harw(path, ds: Dataset, sidecar: dict | None = None) -> None:
    path = Path(path)
    dc, L = ds.n_channels, ds.window
    counts = [len(ds.split(s)[1]) for s in SPLITS]
    rec = np.dtype([("x", "<f4", (dc * L,)), ("y", "<u2")])
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(*counts, dc, L, ds.n_classes))
        for s in SPLITS:
            x, y = ds.split(s)
            if len(y) and (y.min() < 0 or y.max() >= min(ds.n_classes, 2**16)):
                raise HARWError(f"{s}: label outside [0, {ds.n_classes})")
            buf = np.empty(len(y), dtype=rec)
            buf["x"] = x.reshape(len(y), dc * L)
            buf["y"] = y
            f.write(buf.tobytes())
    meta = {"name": ds.name, **ds.meta, **(sidecar or {})}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_harw(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise HARWError(f"{path}: not a HARW1 file")
    off = len(MAGIC)
    if len(raw) < off + _HEADER.size:
        raise HARWError(f"{path}: truncated header")
    n_tr, n_va, n_te, dc, L, n_classes = _HEADER.unpack_from(raw, off)
    off += _HEADER.size
    rec = np.dtype([("x", "<f4", (dc * L,)), ("y", "<u2")])
    n = n_tr + n_va + n_te
    if len(raw) != off + n * rec.itemsize:
        raise HARWError(f"{path}: expected {n} windows of {rec.itemsize} bytes, "
                        f"found {len(raw) - off} payload bytes")
    body = np.frombuffer(raw, dtype=rec, offset=off, count=n)
    x = body["x"].astype(np.float32).reshape(n, dc, L)
    y = body["y"].astype(np.int64)
    a, b = n_tr, n_tr + n_va
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    return Dataset(x[:a], y[:a], x[a:b], y[a:b], x[b:], y[b:], n_classes=int(n_classes),
                   name=meta.pop("name", ""), meta=meta)
