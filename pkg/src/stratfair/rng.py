"""Deterministic counter-based random streams.

Every stochastic routine in the package draws from a stream derived from a
single integer seed plus a structured path (e.g. ``(group, draw_block)``).
Streams are independent of evaluation order, so fan-out over sweep points or
Monte Carlo blocks cannot change results.
"""

from __future__ import annotations

import numpy as np


def derived_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and a derivation path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
