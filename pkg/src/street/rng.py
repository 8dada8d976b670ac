"""Seed derivation so every consumer of randomness is keyed off one top-level seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, purpose: str) -> int:
    """Stable 63-bit seed for ``(seed, purpose)``; independent of PYTHONHASHSEED."""
    h = hashlib.blake2b(f"{int(seed)}:{purpose}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, purpose))
