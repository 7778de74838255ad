"""Reproducible random streams.

Every randomized component draws from a Philox counter-based generator keyed
by ``(seed, fnv1a64(stream_name))``.  Streams are independent: adding draws in
one suite never perturbs another suite's values, and a (seed, name) pair is a
stable cross-run identity for a stream.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SEED = 1729

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def stream_key(name: str) -> int:
    """FNV-1a 64-bit hash of a stream name."""
    h = _FNV_OFFSET
    for byte in name.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` under ``seed``."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream_key(name)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
