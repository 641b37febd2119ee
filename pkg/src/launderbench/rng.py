"""Deterministic seed derivation for per-file, per-attack random draws.

Python's builtin hash() is salted per process, so seeds are derived from a
SHA-256 digest over the canonical string form of the key parts.  The same
(base seed, parts) always maps to the same 64-bit seed on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Mix any number of ints/strings into a stable 64-bit seed."""
    canonical = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(canonical.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(*parts) -> np.random.Generator:
    """A PCG64 generator keyed by the given parts."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
