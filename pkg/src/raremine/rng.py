"""Seed derivation on a fixed, portable bit stream.

All randomness in the package flows through numpy's PCG64 generator. Derived
streams are keyed by (root seed, context keys): integer keys are used as-is,
string keys are mapped through SHA-256 so the derivation never depends on
Python's per-process hash salt. Identical (seed, keys) therefore yield an
identical bit stream on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed_sequence(seed: int, *keys: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys])


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Generator for the stream identified by (seed, *keys)."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(seed, *keys)))


def derive_child_seed(seed: int, *keys: int | str) -> int:
    """64-bit integer seed for the child stream identified by (seed, *keys)."""
    state = derive_seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
