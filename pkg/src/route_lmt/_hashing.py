"""Keyed hashing for seeded, order-independent pseudo-random draws.

Both the random scorer and the dataset splitter need a deterministic map
from (seed, string id) to a uniform value that does not depend on record
order or on platform word size. blake2b keyed by the seed's 64-bit
big-endian bytes gives that; a per-consumer personalization tag keeps the
two streams independent even under the same seed.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def keyed_unit_interval(seed: int, text: str, domain: bytes) -> float:
    """Map (seed, text) to a uniform float in [0, 1), stable across runs."""
    key = (seed & _MASK64).to_bytes(8, "big")
    digest = hashlib.blake2b(
        text.encode("utf-8"), digest_size=8, key=key, person=domain
    ).digest()
    return int.from_bytes(digest, "big") / 2.0**64
