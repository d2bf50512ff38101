"""Sub-seed derivation so that every random stream descends from one user seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, tag: str) -> int:
    """Stable 63-bit seed for the stream named ``tag`` under ``seed``."""
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def rng_for(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag))
