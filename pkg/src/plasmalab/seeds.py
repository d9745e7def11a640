"""Deterministic splitting of a root seed into per-task 64-bit seeds."""

from __future__ import annotations

import numpy as np


def derive_seed(root: int, *keys: int) -> int:
    """Child seed for ``keys`` under ``root``; stable across runs and platforms."""
    ss = np.random.SeedSequence(int(root) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
