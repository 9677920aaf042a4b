"""Synthetic activity windows for desk-scale experiments.

Window ``i`` of class ``c``, channel ``k``, sample ``t`` in ``0..L-1``::

    x[k, t] = a_i * sin(2*pi * (f[c, k] + df_ik) * t / L + phi[c, k] + theta_ik) + n[k, t]

with ``a_i ~ U(0.7, 1.3)`` an amplitude jitter, ``df_ik ~ U(-0.5, 0.5)`` a
frequency jitter, ``theta_ik ~ U(0, 2*pi)`` a random phase and
``n ~ N(0, 0.3^2)``.  ``f[c, k]`` is ``LOW + k`` or ``HIGH + k`` cycles per
window depending on bit ``k`` of the class code, so one channel alone never
identifies the class.  ``phi`` is a fixed class-dependent phase offset.  The
expected mean of every window is zero, so per-channel means carry no class
information, and the jitter keeps raw nearest-neighbour matching imperfect.
"""

from __future__ import annotations

import numpy as np

from ..rng import stream
from .windows import SensorWindow

LOW, HIGH = 3.0, 8.0
NOISE = 0.3
AMP_JITTER = (0.7, 1.3)
FREQ_JITTER = 0.5


def class_codes(n_classes: int, n_channels: int) -> np.ndarray:
    """Distinct binary codes (n_classes, n_channels), balanced ones first."""
    if n_classes > 2 ** n_channels:
        raise ValueError(f"{n_classes} classes need at least {int(np.ceil(np.log2(n_classes)))} channels")
    codes = [[(i >> k) & 1 for k in range(n_channels)] for i in range(2 ** n_channels)]
    # mixed codes first, so the all-low and all-high codes are used last
    codes = sorted(codes, key=lambda c: abs(2 * sum(c) - n_channels))
    return np.array(codes[:n_classes], dtype=np.int64)


def class_frequencies(n_classes: int, n_channels: int) -> np.ndarray:
    k = np.arange(n_channels)
    return np.where(class_codes(n_classes, n_channels) == 1, HIGH + k, LOW + k)


def synth_har(n_classes: int = 6, n_channels: int = 3, length: int = 128, n_per_class: int = 200,
              seed: int = 7) -> list[SensorWindow]:
    """Windows ordered class by class; ``rec_id`` is ``synth/class{c}``."""
    freqs = class_frequencies(n_classes, n_channels)
    phi = stream(seed, "synth", "phase").uniform(0, 2 * np.pi, (n_classes, n_channels))
    t = np.arange(length) / length
    out = []
    for c in range(n_classes):
        rng = stream(seed, "synth", f"class{c}")
        amp = rng.uniform(*AMP_JITTER, n_per_class)
        theta = rng.uniform(0, 2 * np.pi, (n_per_class, n_channels))
        df = rng.uniform(-FREQ_JITTER, FREQ_JITTER, (n_per_class, n_channels))
        noise = rng.normal(0.0, NOISE, (n_per_class, n_channels, length))
        f = freqs[c][None, :] + df
        arg = 2 * np.pi * f[:, :, None] * t + phi[c][None, :, None] + theta[:, :, None]
        x = amp[:, None, None] * np.sin(arg) + noise
        for i in range(n_per_class):
            out.append(SensorWindow(x[i].astype(np.float32), c, f"synth/class{c}", i * length))
    return out


def as_arrays(windows: list[SensorWindow]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([w.data for w in windows]).astype(np.float32)
    y = np.array([w.label for w in windows], dtype=np.int64)
    return x, y


def synth_splits(n_classes: int = 6, n_channels: int = 3, length: int = 128, n_per_class: int = 200,
                 seed: int = 7):
    """Per-class contiguous 0.7/0.1/0.2 split of :func:`synth_har` windows."""
    from .windows import split
    return split(synth_har(n_classes, n_channels, length, n_per_class, seed))
