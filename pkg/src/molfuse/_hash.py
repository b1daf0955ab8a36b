"""Stable 64-bit hashing for structure identifiers.

A multiply-xor mixer (the finalizer from MurmurHash3/SplitMix64) with fixed
seed constants, so identifiers are bit-identical across runs, platforms and
Python versions. Never swap in Python's builtin ``hash``: it is salted per
process.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_SEED = 0x9E3779B97F4A7C15  # 2^64 / golden ratio
_MULT1 = 0xFF51AFD7ED558CCD
_MULT2 = 0xC4CEB9FE1A85EC53


def mix64(x: int) -> int:
    x &= _MASK
    x ^= x >> 33
    x = (x * _MULT1) & _MASK
    x ^= x >> 33
    x = (x * _MULT2) & _MASK
    x ^= x >> 33
    return x


def hash_ints(values: tuple[int, ...] | list[int]) -> int:
    """Order-sensitive combine of a sequence of integers."""
    h = _SEED
    for v in values:
        h = mix64(h ^ mix64(v & _MASK))
    return h


def hash_text(text: str) -> int:
    h = _SEED ^ len(text)
    for b in text.encode("utf-8"):
        h = mix64(h ^ b)
    return h
