"""Named, counter-based random streams.

Each stream is a Philox generator keyed by (seed, crc32(name), *extra), so a
stream's output never depends on how many draws other streams consumed.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())] + [int(e) for e in extra]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
