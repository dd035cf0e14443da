"""Containers for simulated trajectory output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrajectoryRecord"]


@dataclass
class TrajectoryRecord:
    """One run's conditional-state samples plus its event/noise metadata.

    ``samples`` holds normalized Bloch components at ``sample_times``: a
    (n, 1) array of <sx> for schemes confined to the x axis, or (n, 3) of
    (<sx>, <sy>, <sz>) for diffusive schemes.  Jump arrays are empty for
    diffusive unravellings.
    """

    scheme: str
    eta: float
    sample_times: np.ndarray
    samples: np.ndarray
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    jump_channels: list = field(default_factory=list)
    jump_post_states: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    seed_keys: tuple = ()

    def __post_init__(self):
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
