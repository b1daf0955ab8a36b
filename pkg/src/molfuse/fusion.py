"""Combining modalities at three stages.

Early: a convex combination of target similarity matrices, which stays
row-stochastic (each row sum is the weighted sum of row sums, all 1).
Intermediate: concatenate per-branch feature vectors and reduce back to
one branch's width with an MLP. Late: each branch produces a prediction
and a scalar gate from its own features; the final prediction is the
gate-weighted sum. Gates are a plain affine map with no cross-branch
normalization, so their sign and scale are unconstrained and per-branch
contributions w*p decompose the output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .encoders import init_mlp_params, mlp_head
from .optim import ParamStore
from .similarity import TargetSimilarityMatrix


@dataclass(frozen=True)
class FusionWeights:
    weights: dict[str, float]

    def __post_init__(self):
        if not self.weights:
            raise ValueError("no fusion weights given")
        for name, w in self.weights.items():
            if w < 0:
                raise ValueError(f"fusion weight for {name!r} is negative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"fusion weights must sum to 1, got {total}")

    @classmethod
    def uniform(cls, modalities: Sequence[str]) -> "FusionWeights":
        w = 1.0 / len(modalities)
        return cls({m: w for m in modalities})


def early_fuse_targets(matrices: Mapping[str, TargetSimilarityMatrix],
                       weights: FusionWeights) -> TargetSimilarityMatrix:
    """Elementwise convex combination of per-modality target matrices."""
    if set(matrices) != set(weights.weights):
        raise ValueError(
            f"modalities {sorted(matrices)} do not match weights {sorted(weights.weights)}"
        )
    names = list(matrices)
    ids = matrices[names[0]].ids
    for name in names[1:]:
        if matrices[name].ids != ids:
            raise ValueError(f"id ordering of {name!r} differs from {names[0]!r}")
    fused = np.zeros_like(matrices[names[0]].t)
    for name in names:
        fused += weights.weights[name] * matrices[name].t
    return TargetSimilarityMatrix(ids, fused)


# ----------------------------------------------------------------------
# intermediate fusion
# ----------------------------------------------------------------------

def intermediate_dims(n_inputs: int, dim: int) -> list[int]:
    """Default MLP chain: one hidden layer as wide as the concatenation."""
    return [n_inputs * dim, n_inputs * dim, dim]


def init_intermediate_params(store: ParamStore, n_inputs: int, dim: int,
                             rng: np.random.Generator, prefix: str = "fuse.") -> None:
    init_mlp_params(store, prefix, intermediate_dims(n_inputs, dim), rng)


def intermediate_fuse(features: Sequence[Tensor], store: ParamStore, tape: Tape,
                      prefix: str = "fuse.",
                      layer_dims: list[int] | None = None) -> Tensor:
    """MLP over the concatenated branch features, back to one branch's width.

    ``layer_dims=[]`` is the identity configuration and is only valid for a
    single branch (otherwise the output width contract cannot hold).
    """
    if not features:
        raise ValueError("no feature branches to fuse")
    dim = features[0].shape[1]
    for f in features[1:]:
        if f.shape[1] != dim:
            raise ValueError(f"branch widths differ: {f.shape[1]} vs {dim}")
    if layer_dims is not None and len(layer_dims) < 2 and len(features) > 1:
        raise ValueError("identity configuration needs a single branch")
    dims = intermediate_dims(len(features), dim) if layer_dims is None else layer_dims
    stacked = features[0] if len(features) == 1 else ad.concat(list(features), axis=1)
    return mlp_head(stacked, store, prefix, dims, tape)


# ----------------------------------------------------------------------
# late fusion
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LateFusionHead:
    """Structure of the decision-level head: one affine gate (feature ->
    scalar) and one readout MLP (feature -> prediction) per branch."""

    branches: tuple[str, ...]
    feature_dim: int
    n_tasks: int

    def __post_init__(self):
        if not self.branches:
            raise ValueError("late fusion needs at least one branch")

    def gate_dims(self) -> list[int]:
        return [self.feature_dim, 1]

    def readout_dims(self) -> list[int]:
        return [self.feature_dim, self.feature_dim, self.n_tasks]


@dataclass
class LateFusionResult:
    prediction: Tensor  # [N, n_tasks], equal to sum of gate * branch pred
    gates: dict[str, Tensor]  # each [N, 1]
    branch_predictions: dict[str, Tensor]  # each [N, n_tasks]


def init_late_fusion_params(store: ParamStore, head: LateFusionHead,
                            rng: np.random.Generator, prefix: str = "late.") -> None:
    for name in head.branches:
        init_mlp_params(store, f"{prefix}{name}.gate.", head.gate_dims(), rng)
        init_mlp_params(store, f"{prefix}{name}.readout.", head.readout_dims(), rng)


def late_fuse(features: Mapping[str, Tensor], store: ParamStore, tape: Tape,
              head: LateFusionHead, prefix: str = "late.") -> LateFusionResult:
    """Gate-weighted sum of per-branch predictions.

    Gates and branch predictions are kept on the result for contribution
    reporting; the prediction is exactly their weighted sum.
    """
    if tuple(features) != head.branches:
        raise ValueError(f"features {tuple(features)} do not match head branches {head.branches}")
    gates: dict[str, Tensor] = {}
    preds: dict[str, Tensor] = {}
    total: Tensor | None = None
    for name in head.branches:
        f = features[name]
        gate = mlp_head(f, store, f"{prefix}{name}.gate.", head.gate_dims(), tape)
        pred = mlp_head(f, store, f"{prefix}{name}.readout.", head.readout_dims(), tape)
        gates[name] = gate
        preds[name] = pred
        contribution = ad.mul_colvec(pred, gate)
        total = contribution if total is None else ad.add(total, contribution)
    return LateFusionResult(total, gates, preds)
