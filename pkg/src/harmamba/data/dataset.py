"""Windowed splits as dense arrays, the form the trainer consumes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .windows import SensorWindow, Standardizer

SPLITS = ("train", "val", "test")


def _stack(ws: list[SensorWindow], n_channels: int, length: int):
    if not ws:
        return np.zeros((0, n_channels, length), np.float32), np.zeros(0, np.int64)
    return (np.stack([w.data for w in ws]).astype(np.float32),
            np.array([w.label for w in ws], dtype=np.int64))


@dataclass
class Dataset:
    x_train: np.ndarray   # (N, D_c, L) float32
    y_train: np.ndarray   # (N,) int64
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_channels(self) -> int:
        return self.x_train.shape[1]

    @property
    def window(self) -> int:
        return self.x_train.shape[2]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {list(SPLITS)}")
        return getattr(self, f"x_{name}"), getattr(self, f"y_{name}")

    def counts(self) -> dict:
        return {s: np.bincount(self.split(s)[1], minlength=self.n_classes).tolist() for s in SPLITS}

    @classmethod
    def from_windows(cls, train, val, test, n_classes: int, name: str = "", meta=None) -> "Dataset":
        ref = (train or val or test)[0]
        dc, L = ref.data.shape
        arrays = [a for ws in (train, val, test) for a in _stack(ws, dc, L)]
        return cls(*arrays, n_classes=n_classes, name=name, meta=dict(meta or {}))


def synthetic_dataset(n_classes: int = 6, n_channels: int = 3, length: int = 128,
                      n_per_class: int = 200, seed: int = 7) -> Dataset:
    """Generated windows split per class, standardized with training statistics."""
    from .synth import synth_splits

    train, val, test = synth_splits(n_classes, n_channels, length, n_per_class, seed)
    ds = Dataset.from_windows(train, val, test, n_classes, name="synthetic",
                              meta={"seed": seed, "n_per_class": n_per_class})
    flat = ds.x_train.transpose(0, 2, 1).reshape(-1, n_channels)
    stats = Standardizer.from_array(flat.astype(np.float64))
    for s in SPLITS:
        x = getattr(ds, f"x_{s}")
        setattr(ds, f"x_{s}", stats.transform(x, channel_axis=1).astype(np.float32))
    ds.meta["stats"] = stats.to_dict()
    return ds
