"""Named random streams split from one 64-bit seed.

``stream(seed, "blocks.0.fwd.W_B")`` always yields the same generator for the
same (seed, names), independent of what else was drawn, so two model
variants initialize shared parameters identically.
"""

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, *names: str) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(seq))
