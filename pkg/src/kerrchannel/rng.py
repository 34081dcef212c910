"""Reproducible random streams.

Every stream is a Philox counter-based generator keyed by a base seed and a
tuple of integers (for the ensemble: power index, realization, purpose).  The
draws of one realization therefore never depend on how realizations are
batched or scheduled across workers.
"""

from __future__ import annotations

import numpy as np

# purposes
PHASES = 0
NOISE = 1


def stream(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with E|z|^2 = variance."""
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    scale = np.sqrt(variance / 2.0)
    return scale * (z[0] + 1j * z[1])
