"""Deterministic seed derivation.

Every random decision in the toolkit flows from one global seed through
``derive_seed``: the purpose strings keep independent consumers (view
sampling, poisoning, placement, ...) on non-overlapping streams while
staying reproducible across platforms and process restarts.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *purpose: object) -> int:
    """Map (seed, purpose...) to a stable 64-bit seed via SHA-256."""
    tag = "/".join(str(p) for p in purpose)
    digest = hashlib.sha256(f"{seed}/{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & _MASK64


def rng_for(seed: int, *purpose: object) -> np.random.Generator:
    """Generator seeded from the derived (seed, purpose...) stream."""
    return np.random.default_rng(derive_seed(seed, *purpose))
