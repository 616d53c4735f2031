"""Deterministic splittable random streams.

Every stochastic routine in this package takes an integer seed and derives
independent substreams with :func:`substream`.  Trajectory ``i`` of a run
draws from the substream at path ``(i,)``, so parallel and sequential
execution of independent trajectories produce bit-identical results.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``path`` under ``seed``.

    Distinct paths give statistically independent streams; the same
    (seed, path) always gives the same stream.
    """
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=tuple(int(p) & _MASK64 for p in path),
    )
    return np.random.default_rng(ss)
