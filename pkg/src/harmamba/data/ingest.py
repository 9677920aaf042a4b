"""CSV ingestion validated against a dataset manifest.

Expected CSV header: ``timestamp,label,<channel>...`` with the channel
columns named exactly as in the manifest (any order).  Timestamps are
seconds.  Empty cells and ``nan`` parse to NaN and are left for
interpolation; an empty label means unlabeled (-1).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .windows import RawRecording

RATE_TOLERANCE = 0.05
MAX_REPORTED = 20


@dataclass
class DatasetManifest:
    name: str
    n_classes: int
    rate_hz: float
    window: int
    channels: list
    patch_len: int | None = None
    notes: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        required = ("name", "n_classes", "rate_hz", "window", "channels")
        missing = [k for k in required if k not in d]
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if missing or unknown:
            raise ValueError(f"manifest: missing fields {missing}, unknown fields {unknown}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def builtin_manifests() -> dict[str, DatasetManifest]:
    root = resources.files("harmamba.data") / "manifests"
    out = {}
    for f in sorted(root.iterdir(), key=lambda p: p.name):
        if f.name.endswith(".json"):
            out[f.name[:-5]] = DatasetManifest.from_dict(json.loads(f.read_text()))
    return out


def resolve_manifest(ref) -> DatasetManifest:
    """A manifest path, or the name of a built-in one (``pamap2``, ``wisdm``, ...)."""
    builtin = builtin_manifests()
    if str(ref).lower() in builtin and not Path(ref).exists():
        return builtin[str(ref).lower()]
    return DatasetManifest.load(ref)


class IngestError(ValueError):
    """Problems found in one CSV; ``problems`` holds ``(line, message)`` pairs."""

    def __init__(self, path, problems):
        self.path = str(path)
        self.problems = list(problems)
        shown = "; ".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.problems[:MAX_REPORTED])
        more = len(self.problems) - MAX_REPORTED
        super().__init__(f"{self.path}: {shown}" + (f" (+{more} more)" if more > 0 else ""))


def _num(cell: str) -> float:
    cell = cell.strip()
    return math.nan if cell == "" or cell.lower() == "nan" else float(cell)


def ingest_csv(path, manifest: DatasetManifest, rec_id: str | None = None) -> RawRecording:
    path = Path(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise IngestError(path, [(0, "empty file")])
    header = [h.strip() for h in rows[0]]
    expected = ["timestamp", "label", *manifest.channels]
    missing = [c for c in expected if c not in header]
    extra = [c for c in header if c not in expected]
    if missing or extra:
        probs = [(1, f"missing column {c!r}") for c in missing]
        probs += [(1, f"unexpected column {c!r}; manifest {manifest.name} lists "
                      f"{len(manifest.channels)} channels") for c in extra]
        raise IngestError(path, probs)
    cols = [header.index(c) for c in expected]
    problems, ts, labels, samples = [], [], [], []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            problems.append((ln, f"{len(row)} cells, header has {len(header)}"))
            continue
        try:
            t = float(row[cols[0]])
        except ValueError:
            problems.append((ln, f"non-numeric timestamp {row[cols[0]]!r}"))
            continue
        lab = row[cols[1]].strip()
        try:
            lab = -1 if lab == "" else int(float(lab))
        except ValueError:
            problems.append((ln, f"non-numeric label {lab!r}"))
            continue
        if lab >= manifest.n_classes or lab < -1:
            problems.append((ln, f"label {lab} outside [0, {manifest.n_classes})"))
            continue
        vals = []
        for name, j in zip(manifest.channels, cols[2:]):
            try:
                vals.append(_num(row[j]))
            except ValueError:
                problems.append((ln, f"non-numeric value {row[j]!r} in column {name!r}"))
                break
        else:
            ts.append(t)
            labels.append(lab)
            samples.append(vals)
    if problems:
        raise IngestError(path, problems)
    if not samples:
        raise IngestError(path, [(0, "no data rows")])
    ts = np.asarray(ts)
    if len(ts) > 2:
        dt = np.median(np.diff(ts))
        if dt <= 0:
            raise IngestError(path, [(0, "timestamps are not increasing")])
        rate = 1.0 / dt
        if abs(rate - manifest.rate_hz) > RATE_TOLERANCE * manifest.rate_hz:
            raise IngestError(path, [(0, f"sample rate {rate:.3g} Hz does not match manifest "
                                         f"{manifest.rate_hz} Hz")])
    return RawRecording(rec_id or path.stem, list(manifest.channels), manifest.rate_hz,
                        np.array(samples, dtype=np.float64), np.array(labels, dtype=np.int64),
                        subject=rec_id or path.stem)


def ingest_dir(directory, manifest: DatasetManifest) -> list[RawRecording]:
    """Every ``*.csv`` under ``directory`` in sorted path order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"input directory not found: {directory}")
    files = sorted(directory.rglob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no CSV files under {directory}")
    return [ingest_csv(f, manifest, rec_id=f.relative_to(directory).with_suffix("").as_posix()) for f in files]
