"""Keyed random-number streams.

Every stochastic routine in the package derives its generator from a
user-visible seed plus a structural key (tree index, column index,
replicate index, ...).  Streams are therefore independent of execution
order and of the number of workers.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & _MASK64


def keyed_rng(seed: int, *key) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *key)``."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(_key_part(k) for k in key)
    )
    return np.random.Generator(np.random.Philox(ss))
