"""Pretraining losses.

The central one is the soft-target alignment loss: cross-entropy between
the row softmax of learned pairwise-similarity logits and a fixed
row-stochastic target matrix. It needs no positive/negative pair labels;
its gradient with respect to the logits is (softmax(d) - t) / N, and its
unique row-wise optimum satisfies softmax(d) = t exactly, with logit gaps
matching log target ratios. ``optimize_free_similarities`` is a small
gradient-descent oracle over unconstrained logits that exhibits this
convergence on its own, independent of the tape machinery.

Also here: the two-view relational loss with self-pairs excluded and a
stop-gradient second view, plus contrastive (InfoNCE) and triplet losses
used as ablation baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .similarity import TargetSimilarityMatrix


@dataclass
class LossValue:
    value: Tensor  # scalar, attached to the caller's tape
    batch_size: int

    def item(self) -> float:
        return float(self.value.values)


def _target_array(t) -> np.ndarray:
    arr = t.t if isinstance(t, TargetSimilarityMatrix) else np.asarray(t, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"target matrix must be square, got {arr.shape}")
    if np.abs(arr.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("target matrix rows must sum to 1 (within 1e-6)")
    return arr


def learned_similarity_logits(projected: Tensor) -> Tensor:
    """Pairwise similarity logits: dot products of L2-normalized rows."""
    z = ad.l2_normalize_rows(projected)
    return ad.matmul(z, ad.transpose(z))


def alignment_loss(d: Tensor, t) -> LossValue:
    """Cross-entropy between row_softmax(d) and a row-stochastic target.

    loss = -(1/N) sum_ij t_ij log softmax(d)_ij, so d(loss)/d(d_ij) is
    (softmax(d)_ij - t_ij) / N.
    """
    target = _target_array(t)
    if d.shape != target.shape:
        raise ValueError(f"logit shape {d.shape} does not match target {target.shape}")
    n = target.shape[0]
    log_probs = ad.log_row_softmax(d)
    weighted = ad.mul(log_probs, ad.constant(target))
    loss = ad.scale(ad.reduce_sum(weighted), -1.0 / n)
    return LossValue(loss, n)


def alignment_loss_floor(t) -> float:
    """Mean row entropy of the target: the attainable minimum of the loss."""
    target = _target_array(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(target > 0, np.log(np.where(target > 0, target, 1.0)), 0.0)
    return float(-(target * logs).sum() / target.shape[0])


def optimize_free_similarities(t, lr: float = 1.0, steps: int = 5000) -> tuple[np.ndarray, float]:
    """Gradient descent on unconstrained logits d from zero init.

    Descends the per-row cross-entropy (gradient softmax(d) - t, not
    normalized by N, so ``lr`` is the full per-coordinate step). Returns the
    final d and the sup-norm error ||row_softmax(d) - t||_inf. Intended as
    a small-scale convergence oracle, capped at 64 instances.
    """
    target = _target_array(t)
    n = target.shape[0]
    if n > 64:
        raise ValueError("oracle is capped at 64 instances")
    if (target <= 0).any():
        raise ValueError("target must be strictly positive")
    d = np.zeros_like(target)
    for _ in range(steps):
        shifted = d - d.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        soft = e / e.sum(axis=1, keepdims=True)
        d -= lr * (soft - target)
    shifted = d - d.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    soft = e / e.sum(axis=1, keepdims=True)
    return d, float(np.abs(soft - target).max())


def _check_normalized(z: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(z, axis=1)
    if np.abs(norms - 1.0).max() > 1e-6:
        raise ValueError(f"{name} rows must be L2-normalized")


def view_relational_loss(z1: Tensor, z2: np.ndarray, tau: float, tau_m: float) -> LossValue:
    """Two-view relational loss with self-pairs excluded.

    The first view's off-diagonal softmax similarities are pulled toward
    the second view's (computed at temperature ``tau_m`` and treated as a
    constant, so gradients flow only through ``z1``).
    """
    z2 = np.asarray(z2, dtype=np.float64)
    n = z2.shape[0]
    if n < 2:
        raise ValueError("need at least 2 instances")
    if z1.shape != z2.shape:
        raise ValueError(f"view shapes differ: {z1.shape} vs {z2.shape}")
    _check_normalized(z1.values, "z1")
    _check_normalized(z2, "z2")

    off_diag = ~np.eye(n, dtype=bool)
    logits2 = (z2 @ z2.T) / tau_m
    masked2 = np.where(off_diag, logits2, -np.inf)
    e2 = np.exp(masked2 - masked2.max(axis=1, keepdims=True))
    s2 = e2 / e2.sum(axis=1, keepdims=True)

    logits1 = ad.scale(ad.matmul(z1, ad.constant(z2.T)), 1.0 / tau)
    log_s1 = ad.masked_log_row_softmax(logits1, off_diag)
    weighted = ad.mul(log_s1, ad.constant(s2))
    loss = ad.scale(ad.reduce_sum(weighted), -1.0 / n)
    return LossValue(loss, n)


def contrastive_loss(anchors: Tensor, positives, temperature: float) -> LossValue:
    """Normalized-temperature cross-entropy over in-batch negatives.

    Row i's positive is row i of ``positives``; every other row acts as a
    negative.
    """
    n = anchors.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    pos = positives if isinstance(positives, Tensor) else ad.constant(positives)
    if anchors.shape != pos.shape:
        raise ValueError(f"batch shapes differ: {anchors.shape} vs {pos.shape}")
    za = ad.l2_normalize_rows(anchors)
    zp = ad.l2_normalize_rows(pos)
    logits = ad.scale(ad.matmul(za, ad.transpose(zp)), 1.0 / temperature)
    log_probs = ad.log_row_softmax(logits)
    diag = ad.mul(log_probs, ad.constant(np.eye(n)))
    loss = ad.scale(ad.reduce_sum(diag), -1.0 / n)
    return LossValue(loss, n)


def _row_distance(a: Tensor, b: Tensor) -> Tensor:
    """Per-row Euclidean distance, a tiny epsilon under the root keeps the
    gradient bounded at coincident points."""
    diff = ad.sub(a, b)
    sq = ad.mul(diff, diff)
    ones = np.ones((a.shape[1], 1))
    total = ad.add(ad.matmul(sq, ad.constant(ones)), ad.constant(np.full((a.shape[0], 1), 1e-12)))
    return ad.sqrt(total)


def triplet_loss(anchor: Tensor, positive, negative, margin: float) -> LossValue:
    """mean(max(0, margin + d(a, p) - d(a, n))) with Euclidean distances."""
    n = anchor.shape[0]
    if n < 1:
        raise ValueError("triplet loss needs at least one triplet")
    pos = positive if isinstance(positive, Tensor) else ad.constant(positive)
    neg = negative if isinstance(negative, Tensor) else ad.constant(negative)
    if anchor.shape != pos.values.shape or anchor.shape != neg.values.shape:
        raise ValueError(
            f"triplet shapes differ: {anchor.shape} vs {pos.values.shape} vs {neg.values.shape}"
        )
    d_ap = _row_distance(anchor, pos)
    d_an = _row_distance(anchor, neg)
    hinge = ad.relu(ad.add(ad.sub(d_ap, d_an), ad.constant(np.array([margin]))))
    return LossValue(ad.reduce_mean(hinge), n)
