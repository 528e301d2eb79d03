"""Deterministic random stream management.

Every stochastic routine in the package takes an explicit
``numpy.random.Generator``. Streams are named by a ``(seed, *path)`` tuple and
built on the Philox counter-based bit generator, so any two distinct paths
yield statistically independent streams and the same path always reproduces
the same draws, independent of execution order or worker count.
"""
from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator named by ``(seed, *path)``.

    Parameters
    ----------
    seed : int
        Root seed (any non-negative integer, e.g. a 64-bit value).
    *path : int
        Non-negative integers identifying the substream, e.g.
        ``stream(seed, rep, ROLE_GRAPH)``.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if any(p < 0 for p in path):
        raise ValueError("stream path components must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))
