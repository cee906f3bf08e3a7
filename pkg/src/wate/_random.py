"""Keyed random streams.

Every stream is a Philox generator whose key comes from
``SeedSequence(seed, spawn_key=keys)``, so the draws for replicate ``r`` are a
function of ``(seed, r)`` alone and do not depend on execution order.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))
    )


def child_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed derived from ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
