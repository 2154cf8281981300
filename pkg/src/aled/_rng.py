"""Deterministic seed derivation.

Derived seeds let independent pieces of work (ensemble members, trials,
per-class fits) own private generators that do not depend on execution
order, so threaded and sequential runs produce identical output.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(root: int, *parts: int) -> int:
    """Hash a root seed and a path of integers into a new 64-bit seed."""
    state = _splitmix64(root & _MASK)
    for part in parts:
        state = _splitmix64(state ^ _splitmix64(part & _MASK))
    return state


def generator(root: int, *parts: int) -> np.random.Generator:
    """A fresh PCG64 generator seeded from ``derive_seed(root, *parts)``."""
    return np.random.default_rng(derive_seed(root, *parts))
