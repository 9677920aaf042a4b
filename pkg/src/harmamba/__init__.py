"""Bidirectional selective state-space classifier for wearable-sensor activity recognition."""

import os

# the TBB layer shipped here is too old for numba; workqueue is deterministic
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
