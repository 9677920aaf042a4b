"""Recording preprocessing: gap filling, sliding windows, splits, standardization."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass
class RawRecording:
    rec_id: str
    channels: list[str]
    rate_hz: float
    samples: np.ndarray          # (T, D_c), NaN allowed before interpolation
    labels: np.ndarray           # (T,), -1 = unlabeled
    subject: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[1] != len(self.channels):
            raise ValueError(f"{self.rec_id}: samples {self.samples.shape} do not match "
                             f"{len(self.channels)} channels")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError(f"{self.rec_id}: {self.labels.shape[0]} labels for "
                             f"{self.samples.shape[0]} samples")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass
class SensorWindow:
    data: np.ndarray   # (D_c, L)
    label: int
    rec_id: str
    start: int

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def span(self) -> tuple[str, int, int]:
        return self.rec_id, self.start, self.start + self.length


def interpolate_missing(rec: RawRecording) -> RawRecording:
    """Linear interpolation across NaN gaps; edges hold the nearest valid value."""
    out = rec.samples.copy()
    t = np.arange(rec.n_samples)
    for k, name in enumerate(rec.channels):
        col = out[:, k]
        ok = ~np.isnan(col)
        if not ok.any():
            raise ValueError(f"{rec.rec_id}: channel {name!r} has no valid samples to interpolate from")
        if not ok.all():
            col[~ok] = np.interp(t[~ok], t[ok], col[ok])
    return replace(rec, samples=out)


def window_stride(length: int, overlap: float) -> int:
    stride = math.floor(length * (1.0 - overlap) + 1e-9)
    if stride < 1:
        raise ValueError(f"overlap {overlap} leaves a window stride below one sample")
    return stride


def majority_label(labels: np.ndarray) -> int:
    """Most frequent labeled value; ties go to the label seen first. -1 if none."""
    labels = labels[labels >= 0]
    if labels.size == 0:
        return -1
    _, first, counts = np.unique(labels, return_index=True, return_counts=True)
    best = counts.max()
    tied = first[counts == best]
    return int(labels[tied.min()])


def window(rec: RawRecording, length: int, overlap: float = 0.5) -> list[SensorWindow]:
    """Fixed windows at starts ``0, stride, 2*stride, ...``.

    Labels come from a majority vote over labeled samples; windows with no
    labeled sample are skipped.
    """
    stride = window_stride(length, overlap)
    T = rec.n_samples
    if T < length:
        log.warning("%s: %d samples is shorter than window %d; no windows", rec.rec_id, T, length)
        return []
    out = []
    for i in range((T - length) // stride + 1):
        s = i * stride
        lab = majority_label(rec.labels[s:s + length])
        if lab < 0:
            continue
        out.append(SensorWindow(rec.samples[s:s + length].T.astype(np.float32), lab, rec.rec_id, s))
    return out


def split_counts(n: int) -> tuple[int, int, int]:
    """Boundaries at floor(0.7 n) and floor(0.8 n); the tail goes to test."""
    n_train = n * 7 // 10
    n_val = n * 8 // 10 - n_train
    return n_train, n_val, n - n_train - n_val


def split(windows: list[SensorWindow]) -> tuple[list, list, list]:
    """Contiguous 0.7/0.1/0.2 split of each recording's windows, in time order.

    A later split drops its leading windows while they still share samples
    with the earlier splits, so no raw sample lands in two splits.
    """
    by_rec: dict[str, list[SensorWindow]] = defaultdict(list)
    for w in windows:
        by_rec[w.rec_id].append(w)
    train, val, test = [], [], []
    for rec_id in sorted(by_rec):
        ws = sorted(by_rec[rec_id], key=lambda w: w.start)
        n_tr, n_va, _ = split_counts(len(ws))
        parts = [ws[:n_tr], ws[n_tr:n_tr + n_va], ws[n_tr + n_va:]]
        taken_end = 0
        for part, sink in zip(parts, (train, val, test)):
            kept = [w for w in part if w.start >= taken_end]
            sink.extend(kept)
            for w in kept:
                taken_end = max(taken_end, w.start + w.length)
    return train, val, test


def _coverage(ws: list[SensorWindow]) -> dict[str, set]:
    cover: dict[str, set] = defaultdict(set)
    for w in ws:
        cover[w.rec_id].update(range(w.start, w.start + w.length))
    return cover


def shared_samples(a: list[SensorWindow], b: list[SensorWindow]) -> int:
    """Number of raw sample indices covered by a window of both ``a`` and ``b``."""
    ca, cb = _coverage(a), _coverage(b)
    return sum(len(ca[rid] & idx) for rid, idx in cb.items())


@dataclass
class Standardizer:
    mean: np.ndarray   # (D_c,)
    std: np.ndarray    # (D_c,); zero-variance channels stored as 1

    @classmethod
    def fit(cls, recordings: list[RawRecording], train: list[SensorWindow]) -> "Standardizer":
        """Statistics over the raw samples covered by training windows only."""
        recs = {r.rec_id: r for r in recordings}
        cover = _coverage(train)
        chunks = [recs[rid].samples[sorted(idx)] for rid, idx in sorted(cover.items())]
        if not chunks:
            raise ValueError("cannot fit standardization statistics without training windows")
        data = np.concatenate(chunks, axis=0)
        return cls.from_array(data)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "Standardizer":
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        return cls(mean=mean, std=np.where(std > 0, std, 1.0))

    def transform(self, x: np.ndarray, channel_axis: int = -1) -> np.ndarray:
        shape = [1] * np.ndim(x)
        shape[channel_axis] = -1
        return (np.asarray(x) - self.mean.reshape(shape)) / self.std.reshape(shape)

    def inverse(self, x: np.ndarray, channel_axis: int = -1) -> np.ndarray:
        shape = [1] * np.ndim(x)
        shape[channel_axis] = -1
        return np.asarray(x) * self.std.reshape(shape) + self.mean.reshape(shape)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def standardize(rec: RawRecording, stats: Standardizer) -> RawRecording:
    return replace(rec, samples=stats.transform(rec.samples, channel_axis=1))


@dataclass
class PreparedData:
    train: list[SensorWindow]
    val: list[SensorWindow]
    test: list[SensorWindow]
    stats: Standardizer
    boundaries: dict = field(default_factory=dict)

    def summary(self, n_classes: int) -> dict:
        def per_class(ws):
            counts = np.bincount([w.label for w in ws], minlength=n_classes)
            return counts.tolist()

        return {name: {"windows": len(ws), "per_class": per_class(ws)}
                for name, ws in (("train", self.train), ("val", self.val), ("test", self.test))}


def prepare(recordings: list[RawRecording], length: int, overlap: float = 0.5) -> PreparedData:
    """Interpolate, window, split per recording, then standardize with train statistics."""
    recs = sorted((interpolate_missing(r) for r in recordings), key=lambda r: r.rec_id)
    windows = [w for r in recs for w in window(r, length, overlap)]
    train, val, test = split(windows)
    stats = Standardizer.fit(recs, train)
    for w in train + val + test:
        w.data = stats.transform(w.data, channel_axis=0).astype(np.float32)
    boundaries = {}
    for name, ws in (("train", train), ("val", val), ("test", test)):
        for w in ws:
            lo, hi = boundaries.setdefault(w.rec_id, {}).get(name, (w.start, w.start + w.length))
            boundaries[w.rec_id][name] = (min(lo, w.start), max(hi, w.start + w.length))
    return PreparedData(train, val, test, stats, boundaries)
