"""Deterministic random-stream derivation.

Every stochastic component draws from its own numpy Generator derived
from (session seed, stream tag, entity ids). Streams never interleave,
so adding draws in one component cannot shift any other component's
sequence between runs.
"""

from __future__ import annotations

import numpy as np

NOISE = 1
OFFSETS = 2
DRIFT_AXIS = 3
INTERFERER = 4
PROTOCOL = 5
BLE = 6
FLOOR = 7


def stream(seed: int, tag: int, *ids: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, tag, *ids]))


def unit_vector(rng: np.random.Generator) -> tuple[float, float, float]:
    """Uniformly distributed direction on the unit sphere."""
    while True:
        v = rng.normal(size=3)
        n = float(np.sqrt(v @ v))
        if n > 1e-12:
            return (float(v[0]) / n, float(v[1]) / n, float(v[2]) / n)
