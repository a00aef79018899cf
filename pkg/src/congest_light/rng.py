"""Stable seeded randomness helpers shared by nodes without communication.

Every party that knows the seed and the label arguments derives the same
values, which is how permutations, coin flips, and sampled radii are agreed
on without sending anything.
"""
from __future__ import annotations

import hashlib
import math


def hash64(*parts) -> int:
    """Stable 64-bit hash of the argument tuple. Not affected by PYTHONHASHSEED."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def unit(*parts) -> float:
    """Uniform value in [0, 1) derived from the hashed parts."""
    return hash64(*parts) / 2.0 ** 64


def coin(*parts) -> bool:
    return hash64(*parts) & 1 == 1


def perm_key(seed: int, label, v: int) -> tuple[int, int]:
    """Sort key realizing a shared uniformly random order; ties broken by id."""
    return (hash64(seed, "perm", label, v), v)


def exp_sample(rate: float, *parts) -> float:
    u = unit(*parts)
    # guard the log at u == 0
    return -math.log(1.0 - u if u < 1.0 else 5e-17) / rate


def truncated_exp(rate: float, bound: float, max_draws: int, *parts) -> float:
    """Exponential sample resampled until it falls below bound.

    Raises RuntimeError when max_draws resamples all land at or above bound.
    """
    for j in range(max_draws):
        x = exp_sample(rate, *parts, j)
        if x < bound:
            return x
    raise RuntimeError(
        f"sampling produced values >= {bound} after {max_draws} draws")
