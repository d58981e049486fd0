"""Reproducible random streams derived from a single master seed.

Every independent unit of Monte Carlo work (the variance sample, each
(permutation, position) cell, the permutation draw itself, design
generation, ...) gets its own generator keyed by small integers under the
master seed.  Streams are derived with ``numpy.random.SeedSequence`` spawn
keys, so results do not depend on evaluation order or on how work is
distributed across threads.
"""
from __future__ import annotations

import numpy as np

# Stream tags.  Each top-level consumer of randomness owns one tag so that
# changing the sample size of one phase never shifts the draws of another.
VARIANCE_STREAM = 0
CELL_STREAM = 1
PERMUTATION_STREAM = 2
DESIGN_STREAM = 3
TEST_STREAM = 4
FIXCHECK_STREAM = 5


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for the work item identified by ``path``.

    Identical ``(seed, path)`` always yields the same stream; distinct paths
    yield streams that are independent for all practical purposes.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError("master seed must be non-negative")
    key = tuple(int(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def as_generator(seed) -> np.random.Generator:
    """Coerce an int seed or an existing Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(seed)
