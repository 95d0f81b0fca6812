"""Named, order-independent random streams.

Every randomized routine takes a :class:`numpy.random.Generator`. Streams are
derived from a master seed plus a tuple of names, so two cells that share no
name never share random numbers, and re-running one cell reproduces it bit
for bit regardless of what else ran first.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, float):
        part = repr(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *names) -> np.random.Generator:
    """Return an independent generator for ``(seed, *names)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))
