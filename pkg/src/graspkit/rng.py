"""Seeded random streams.

All randomness goes through numpy's Philox-4x64 counter-based bit generator,
whose output sequence is fixed by the algorithm and therefore identical on
every platform.  Sub-streams are keyed by a string tag so that adding a new
consumer never shifts the numbers another consumer sees.
"""
from __future__ import annotations

import hashlib

import numpy as np

RNG_ALGORITHM = "Philox4x64-10"


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary printable parts (blake2b of their repr)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *tags) -> np.random.Generator:
    key = derive_seed(int(seed), *tags) if tags else int(seed) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=key))
