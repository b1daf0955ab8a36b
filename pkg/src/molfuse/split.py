"""Scaffold-grouped dataset splitting.

Molecules sharing a scaffold key always land in the same partition. Bins
larger than half the test-set target go straight to train (they would
otherwise dominate the small partitions); the remaining bins are shuffled
by seed and assigned greedily train, then valid, then test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PARTS = ("train", "valid", "test")


@dataclass(frozen=True)
class SplitAssignment:
    tags: tuple[str, ...]  # one of PARTS per molecule
    ratios: tuple[float, float, float]
    seed: int

    def indices(self, part: str) -> list[int]:
        if part not in PARTS:
            raise ValueError(f"unknown partition {part!r}")
        return [i for i, tag in enumerate(self.tags) if tag == part]

    def counts(self) -> dict[str, int]:
        return {part: len(self.indices(part)) for part in PARTS}


def scaffold_split(scaffold_keys: Sequence[str],
                   ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                   seed: int = 0) -> SplitAssignment:
    """Assign each molecule (given its scaffold key) to train/valid/test."""
    n = len(scaffold_keys)
    if n < 10:
        raise ValueError(f"dataset too small to split: {n} molecules (need >= 10)")
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")

    bins: dict[str, list[int]] = {}
    for i, key in enumerate(scaffold_keys):
        bins.setdefault(key, []).append(i)

    train_target = ratios[0] * n
    valid_target = ratios[1] * n
    test_target = ratios[2] * n

    train: list[int] = []
    valid: list[int] = []
    test: list[int] = []
    small_bins = []
    for members in bins.values():
        if len(members) > test_target / 2.0:
            train.extend(members)
        else:
            small_bins.append(members)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(small_bins))
    for k in order:
        members = small_bins[k]
        if len(train) + len(members) <= train_target:
            train.extend(members)
        elif len(valid) + len(members) <= valid_target:
            valid.extend(members)
        else:
            test.extend(members)

    if not valid or not test:
        warnings.warn(
            "scaffold split left an empty partition "
            f"(train={len(train)}, valid={len(valid)}, test={len(test)})",
            stacklevel=2,
        )

    tags = [""] * n
    for part, members in zip(PARTS, (train, valid, test)):
        for i in members:
            tags[i] = part
    return SplitAssignment(tuple(tags), tuple(ratios), seed)
