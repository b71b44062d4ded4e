"""Seeded random streams.

All randomness goes through :func:`make_rng`, which builds a counter-based
Philox generator from a seed plus an optional tuple of integer stream keys.
Streams with different keys are statistically independent, and the same
(seed, keys) always replays the same numbers on every platform.
"""

import numpy as np


def make_rng(seed, *keys):
    """Return a ``numpy.random.Generator`` for stream ``(seed, *keys)``."""
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("stream keys only apply to integer seeds")
        return seed
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError("seeds and stream keys must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_rng(rng):
    """Accept a Generator, an int seed or None (seed 0)."""
    if rng is None:
        return make_rng(0)
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(rng)
