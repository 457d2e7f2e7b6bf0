"""Seeded random streams.

Every consumer asks for its own generator keyed by ``(seed, tag)`` so that
modules never share state and adding a draw in one place cannot shift the
numbers seen somewhere else.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{int(seed)}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, tag: str) -> np.random.Generator:
    """PCG64 generator for the ``(seed, tag)`` pair."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, tag)))
