"""Seed handling shared by every stochastic entry point.

All randomness flows through ``numpy.random.Generator`` backed by PCG64, so a
(seed, parameters) pair fully determines every stream.
"""
from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20170522


def make_rng(seed: int | np.random.Generator | None = None) -> np.random.Generator:
    """Return a PCG64 generator. Passing a Generator returns it unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = DEFAULT_SEED
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master: int, *index: int) -> int:
    """Child seed for worker/grid point ``index`` of ``master``."""
    ss = np.random.SeedSequence([int(master), *map(int, index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
