"""Deterministic, splittable random streams.

Every stream is a Philox (counter-based) generator whose 128-bit key is a
hash of ``(seed, replication, channel)``. Streams for different replications
or channels never share state, so results do not depend on execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *parts: int | str) -> int:
    """Hash a seed and a path of labels into a new 64-bit seed."""
    text = ":".join([str(int(seed) & MASK64), *map(str, parts)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *parts: int | str) -> np.random.Generator:
    """Philox generator keyed by ``hash(seed, *parts)``."""
    text = ":".join([str(int(seed) & MASK64), *map(str, parts)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    key = np.frombuffer(digest, dtype=np.uint64).copy()
    return np.random.Generator(np.random.Philox(key=key))
