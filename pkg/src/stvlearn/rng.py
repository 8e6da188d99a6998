"""Reproducible random streams.

Every randomized routine takes an explicit ``numpy.random.Generator``.  Streams
are built on the Philox4x64-10 counter-based bit generator; the 128-bit key is
the first 16 bytes of ``SHA-256(repr((master_seed, *tags)))``.  The same
``(master_seed, tags)`` therefore yields the same stream on every platform, and
independent trials can be generated in any order or in parallel.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def _digest(master_seed, tags) -> bytes:
    payload = repr((int(master_seed),) + tuple(str(t) for t in tags)).encode()
    return hashlib.sha256(payload).digest()


def derive_seed(master_seed: int, *tags) -> int:
    """A 63-bit integer seed determined by ``master_seed`` and ``tags``."""
    return int.from_bytes(_digest(master_seed, tags)[:8], "little") & _MASK63


def stream(master_seed: int, *tags) -> np.random.Generator:
    """Independent Philox generator keyed by ``(master_seed, *tags)``."""
    d = _digest(master_seed, tags)
    key = np.frombuffer(d[:16], dtype=np.uint64).copy()
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise TypeError("an explicit seed or Generator is required")
    return stream(int(rng))


def split(rng: np.random.Generator, k: int) -> list[np.random.Generator]:
    """Deterministically derive ``k`` child generators from ``rng``."""
    keys = rng.integers(0, np.iinfo(np.uint64).max, size=(k, 2), dtype=np.uint64, endpoint=True)
    return [np.random.Generator(np.random.Philox(key=kk)) for kk in keys]
