"""Named random streams derived from one integer seed.

Each consumer (data shuffling, initialization, dropout, ...) draws from its
own stream so that changing how much randomness one of them consumes never
perturbs the others.
"""

import zlib

import numpy as np


def stream(seed, name, *subkeys):
    """Return a generator for the stream ``name`` (optionally indexed by ints)."""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(k) & 0xFFFFFFFF for k in subkeys)
    return np.random.default_rng(np.random.SeedSequence(key))
