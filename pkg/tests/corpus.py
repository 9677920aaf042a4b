"""Small CSV exports shaped like a manifest, for ingestion and CLI tests."""

import numpy as np


def write_corpus(directory, manifest, n_recordings=2, windows_per_recording=12, seed=0):
    """Labeled segments of class-dependent sinusoids, two windows per segment."""
    rng = np.random.default_rng(seed)
    L = manifest.window
    T = L // 2 * (windows_per_recording + 1)
    t = np.arange(T) / manifest.rate_hz
    dc = len(manifest.channels)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in range(n_recordings):
        labels = (np.arange(T) // (2 * L) + r) % manifest.n_classes
        freq = 0.5 + labels[:, None] * 0.7 + np.arange(dc)[None, :] * 0.1
        x = np.sin(2 * np.pi * freq * t[:, None]) + 0.1 * rng.standard_normal((T, dc))
        path = directory / f"subject{r}.csv"
        with open(path, "w") as f:
            f.write(",".join(["timestamp", "label", *manifest.channels]) + "\n")
            for i in range(T):
                f.write(f"{t[i]:.6f},{labels[i]}," + ",".join(f"{v:.5f}" for v in x[i]) + "\n")
        paths.append(path)
    return paths
