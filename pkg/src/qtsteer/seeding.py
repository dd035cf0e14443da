"""Deterministic RNG substreams.

Every stochastic routine takes an explicit generator; ensemble engines derive
one independent substream per trajectory from (master seed, purpose, index),
so results are reproducible bit-for-bit and independent of how trajectories
are distributed over workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream"]


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator seeded deterministically from a master seed and index keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *keys))))
