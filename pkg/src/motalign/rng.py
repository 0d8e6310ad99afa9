"""Counter-based seed splitting.

Every random stream is a pure function of the top-level seed plus a tuple
of keys, so components stay reproducible when a sweep reorders them.
"""

import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k) & 0xFFFFFFFF


def derive_rng(seed, *keys):
    """Return a fresh ``np.random.Generator`` for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed, *keys):
    """Integer child seed, convenient for records that store their own seed."""
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))
