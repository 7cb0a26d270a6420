"""Named random substreams derived from one root seed.

Every random draw in the package goes through ``substream(seed, *keys)`` so
that a component's randomness depends only on the root seed and its own name,
not on how many draws other components made before it.
"""

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("substream keys must be non-negative")
        return int(k)
    return zlib.crc32(str(k).encode())


def substream(seed: int, *keys) -> np.random.Generator:
    """Return a generator for the stream named ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.default_rng(ss)
