"""Counter-based random streams (Philox) keyed by (seed, stream name)."""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, *names) -> np.random.Generator:
    """Independent generator for ``seed`` and a path of names/ints.

    Each name is folded into the Philox key, so streams never depend on how
    many draws another stream has made.
    """
    words = [int(seed) & 0xFFFFFFFF]
    for n in names:
        words.append(zlib.crc32(str(n).encode()) if not isinstance(n, int) else n & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
