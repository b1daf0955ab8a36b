"""Per-modality target similarities, softmax-normalized into row-stochastic
target matrices.

Graph-level modalities (smiles, image, nmr_spectrum) use cosine similarity
of their fixed embedding vectors; the fingerprint modality uses Tanimoto
over bit vectors; the nmr_peak modality works at atom level through a
reciprocal kernel on chemical-shift distances. Raw similarities go through
a row softmax unscaled, self-pairs included by default (a flag reproduces
the excluded-diagonal variant).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .fingerprint import tanimoto_matrix

GRAPH_MODALITIES = ("smiles", "image", "nmr_spectrum", "fingerprint")
MODALITIES = GRAPH_MODALITIES + ("nmr_peak",)

PPM_HARD_RANGE = (-50.0, 350.0)
PPM_TYPICAL_RANGE = (0.0, 200.0)

DEFAULT_TAU1 = 1e-5
DEFAULT_TAU2 = 10.0

#: Atom-level pairwise computation is O(n^2); batches beyond this are
#: processed as independent chunks, each softmax-normalized on its own.
ATOM_CHUNK_SIZE = 4096


@dataclass(frozen=True)
class ModalityEmbedding:
    """A fixed, externally produced representation attached to a molecule.

    Graph-level modalities carry ``vector``; nmr_peak carries ``peaks``
    mapping atom index to the chemical shift in ppm.
    """

    modality: str
    molecule_id: str
    vector: np.ndarray | None = None
    peaks: Mapping[int, float] | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.modality == "nmr_peak":
            if not self.peaks:
                raise ValueError("nmr_peak embedding needs at least one peak")
            for idx, ppm in self.peaks.items():
                if not np.isfinite(ppm):
                    raise ValueError(f"non-finite ppm for atom {idx}")
                if not PPM_HARD_RANGE[0] <= ppm <= PPM_HARD_RANGE[1]:
                    raise ValueError(f"ppm {ppm} outside plausible range {PPM_HARD_RANGE}")
                if not PPM_TYPICAL_RANGE[0] <= ppm <= PPM_TYPICAL_RANGE[1]:
                    warnings.warn(
                        f"ppm {ppm} outside the typical carbon range {PPM_TYPICAL_RANGE}",
                        stacklevel=2,
                    )
        else:
            if self.vector is None or np.asarray(self.vector).size == 0:
                raise ValueError("graph-level embedding needs a non-empty vector")
            if not np.all(np.isfinite(self.vector)):
                raise ValueError("embedding vector has non-finite entries")


@dataclass(frozen=True)
class TargetSimilarityMatrix:
    ids: tuple
    t: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        if self.t.shape != (n, n):
            raise ValueError(f"matrix shape {self.t.shape} does not match {n} ids")

    def validate(self) -> None:
        sums = self.t.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise ValueError("target matrix rows must sum to 1")
        if (self.t < 0).any():
            raise ValueError("target matrix entries must be non-negative")


def cosine_sim(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"vector lengths differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def nmr_peak_similarity(ppm_l: float, ppm_m: float,
                        tau1: float = DEFAULT_TAU1, tau2: float = DEFAULT_TAU2) -> float:
    """Reciprocal-distance kernel on chemical shifts: tau2 / (|dppm| + tau1).

    Symmetric, strictly decreasing in the shift distance and bounded above
    by tau2/tau1 (attained at distance zero).
    """
    if tau1 <= 0 or tau2 <= 0:
        raise ValueError("tau1 and tau2 must be positive")
    return tau2 / (abs(ppm_l - ppm_m) + tau1)


def _row_softmax(raw: np.ndarray, include_self_pairs: bool) -> np.ndarray:
    logits = raw.copy()
    if not include_self_pairs:
        np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def raw_graph_similarities(embeddings: Sequence[ModalityEmbedding]) -> np.ndarray:
    """Pairwise raw similarity matrix for one graph-level modality."""
    modality = embeddings[0].modality
    if any(e.modality != modality for e in embeddings):
        raise ValueError("embeddings mix modalities")
    vectors = np.stack([np.asarray(e.vector, dtype=np.float64) for e in embeddings])
    if modality == "fingerprint":
        return tanimoto_matrix(vectors)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ValueError("cosine similarity of a zero vector is undefined")
    unit = vectors / norms
    return np.clip(unit @ unit.T, -1.0, 1.0)


def target_matrix(embeddings: Sequence[ModalityEmbedding], level: str = "graph",
                  include_self_pairs: bool = True,
                  tau1: float = DEFAULT_TAU1, tau2: float = DEFAULT_TAU2,
                  max_atoms: int = ATOM_CHUNK_SIZE) -> TargetSimilarityMatrix:
    """Row-stochastic target matrix over a batch of instances.

    Graph level: one instance per molecule. Atom level: one instance per
    ppm-labeled atom in the batch, capped at ``max_atoms`` (chunk larger
    batches with :func:`atom_target_matrices`).
    """
    if level == "graph":
        if len(embeddings) < 2:
            raise ValueError("need at least 2 instances for a target matrix")
        raw = raw_graph_similarities(embeddings)
        ids = tuple(e.molecule_id for e in embeddings)
        return TargetSimilarityMatrix(ids, _row_softmax(raw, include_self_pairs))
    if level != "atom":
        raise ValueError(f"unknown level {level!r}")

    ids, ppms = [], []
    for emb in embeddings:
        if emb.modality != "nmr_peak":
            raise ValueError("atom level requires nmr_peak embeddings")
        for atom_idx in sorted(emb.peaks):
            ids.append((emb.molecule_id, atom_idx))
            ppms.append(emb.peaks[atom_idx])
    if len(ids) < 2:
        raise ValueError("no ppm-labeled atom pairs in this batch")
    if len(ids) > max_atoms:
        raise ValueError(
            f"{len(ids)} labeled atoms exceed the per-batch cap {max_atoms}; "
            "use atom_target_matrices to chunk"
        )
    shifts = np.asarray(ppms, dtype=np.float64)
    raw = tau2 / (np.abs(shifts[:, None] - shifts[None, :]) + tau1)
    return TargetSimilarityMatrix(tuple(ids), _row_softmax(raw, include_self_pairs))


def atom_target_matrices(embeddings: Sequence[ModalityEmbedding],
                         chunk_size: int = ATOM_CHUNK_SIZE,
                         include_self_pairs: bool = True,
                         tau1: float = DEFAULT_TAU1,
                         tau2: float = DEFAULT_TAU2) -> list[TargetSimilarityMatrix]:
    """Atom-level target matrices, chunked to bound the O(n^2) cost.

    Chunks split on molecule boundaries (an atom never lands in a chunk
    without its molecule mates) and each chunk is normalized independently.
    """
    chunks: list[list[ModalityEmbedding]] = [[]]
    atom_count = 0
    for emb in embeddings:
        n = len(emb.peaks or ())
        if atom_count and atom_count + n > chunk_size:
            chunks.append([])
            atom_count = 0
        chunks[-1].append(emb)
        atom_count += n
    out = []
    for chunk in chunks:
        labeled = sum(len(e.peaks or ()) for e in chunk)
        if labeled >= 2:
            out.append(target_matrix(chunk, level="atom",
                                     include_self_pairs=include_self_pairs,
                                     tau1=tau1, tau2=tau2, max_atoms=chunk_size))
    if not out:
        raise ValueError("no ppm-labeled atom pairs in this batch")
    return out
