"""Per-modality pretraining replicas.

Each replica trains one encoder so that the softmax distribution of its
pairwise projected similarities matches that modality's target similarity
distribution. Graph-level modalities align molecule embeddings; the
nmr_peak modality aligns atom embeddings against the chemical-shift
kernel. Early fusion trains a single encoder against the weighted
combination of several modalities' targets, which requires complete
modality coverage per molecule (others train on whatever coverage each
modality has).

All randomness flows from the one seed in the config; replicas derive
independent streams in modality order, so runs are reproducible and
modalities could be trained in parallel processes.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward
from .checkpoint import save_checkpoint
from .data import Dataset
from .encoders import EncoderConfig, encode, init_encoder_params, mlp_head
from .featurize import GraphBatch, featurize, pack_graphs
from .fusion import FusionWeights, early_fuse_targets
from .losses import (
    alignment_loss,
    contrastive_loss,
    learned_similarity_logits,
    triplet_loss,
)
from .optim import Adam, ParamStore
from .similarity import (
    GRAPH_MODALITIES,
    ModalityEmbedding,
    TargetSimilarityMatrix,
    atom_target_matrices,
    target_matrix,
)

log = logging.getLogger(__name__)

EARLY = "early"
PRETRAIN_LOSSES = ("alignment", "contrastive", "triplet")


@dataclass(frozen=True)
class PretrainConfig:
    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 256
    modalities: tuple[str, ...] = GRAPH_MODALITIES + ("nmr_peak",)
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(kind="gin", hidden_dim=128))
    loss: str = "alignment"
    include_self_pairs: bool = True
    tau1: float = 1e-5
    tau2: float = 10.0
    early_weights: FusionWeights | None = None
    # Adam moments are fixed at (0.9, 0.999, 1e-8); only the rate is a knob.

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("hyperparameters must be positive")
        if self.loss not in PRETRAIN_LOSSES:
            raise ValueError(f"loss must be one of {PRETRAIN_LOSSES}")


@dataclass
class PretrainResult:
    modality: str
    store: ParamStore
    loss_history: list[float]
    covered: int
    dropped: int


def _augment_node_mask(batch: GraphBatch, rng: np.random.Generator,
                       fraction: float = 0.1) -> GraphBatch:
    """Zero the feature rows of a random fraction of atoms."""
    mask = rng.random(batch.num_atoms) < fraction
    nodes = batch.node_features.copy()
    nodes[mask] = 0.0
    return GraphBatch(nodes, batch.edge_features, batch.edge_src, batch.edge_tgt,
                      batch.edge_rev, batch.comp_index, batch.num_graphs)


def _graph_target(batch_embs: list[ModalityEmbedding], cfg: PretrainConfig) -> TargetSimilarityMatrix:
    return target_matrix(batch_embs, level="graph",
                         include_self_pairs=cfg.include_self_pairs,
                         tau1=cfg.tau1, tau2=cfg.tau2)


def _alignment_step_graph(batch: GraphBatch, target, store, cfg) -> tuple[float, dict]:
    tape = Tape()
    out = encode(batch, store, cfg.encoder, tape)
    logits = learned_similarity_logits(out.projected)
    loss = alignment_loss(logits, target)
    return loss.item(), backward(loss.value)


def _alignment_step_atoms(batch: GraphBatch, chunks: list[TargetSimilarityMatrix],
                          row_of: dict, store, cfg) -> tuple[float, dict]:
    """Atom-level alignment; multiple chunks average by labeled-atom count."""
    tape = Tape()
    out = encode(batch, store, cfg.encoder, tape)
    proj_dims = [cfg.encoder.embed_dim, cfg.encoder.embed_dim, cfg.encoder.projection_dim]
    atom_proj = mlp_head(out.atom_embeddings, store, "encoder.proj.", proj_dims, tape)
    total = None
    n_total = sum(len(c.ids) for c in chunks)
    for chunk in chunks:
        rows = [row_of[key] for key in chunk.ids]
        z = ad.gather_rows(atom_proj, np.asarray(rows))
        logits = learned_similarity_logits(z)
        piece = alignment_loss(logits, chunk)
        weighted = ad.scale(piece.value, len(chunk.ids) / n_total)
        total = weighted if total is None else ad.add(total, weighted)
    return float(total.values), backward(total)


def _contrastive_step(batch: GraphBatch, store, cfg,
                      aug_rng: np.random.Generator) -> tuple[float, dict]:
    view1 = _augment_node_mask(batch, aug_rng)
    view2 = _augment_node_mask(batch, aug_rng)
    tape = Tape()
    z1 = encode(view1, store, cfg.encoder, tape, prefix="encoder.").projected
    z2 = encode(view2, store, cfg.encoder, tape, prefix="encoder.").projected
    if cfg.loss == "contrastive":
        loss = contrastive_loss(z1, z2, temperature=0.1)
    else:
        if batch.num_graphs < 3:
            raise ValueError("triplet pretraining needs batches of at least 3")
        # Negative: the next molecule in the batch (a cyclic derangement).
        neg = ad.gather_rows(z2, np.roll(np.arange(batch.num_graphs), -1))
        loss = triplet_loss(z1, z2, neg, margin=1.0)
    return loss.item(), backward(loss.value)


def _coverage(dataset: Dataset,
              embeddings: dict[str, list[ModalityEmbedding]],
              modality: str) -> tuple[list[int], dict[str, ModalityEmbedding]]:
    by_id = {e.molecule_id: e for e in embeddings.get(modality, [])}
    idx = [i for i, rec in enumerate(dataset.records) if rec.mol_id in by_id]
    return idx, by_id


def pretrain_modality(dataset: Dataset, modality: str,
                      embeddings: dict[str, list[ModalityEmbedding]],
                      cfg: PretrainConfig, seed_seq: np.random.SeedSequence,
                      graphs: list | None = None) -> PretrainResult:
    """Train one replica; ``modality`` may also be the early-fusion tag."""
    init_seq, shuffle_seq, aug_seq = seed_seq.spawn(3)
    init_rng = np.random.default_rng(init_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    aug_rng = np.random.default_rng(aug_seq)

    if modality == EARLY:
        weights = cfg.early_weights or FusionWeights.uniform(
            [m for m in cfg.modalities if m != "nmr_peak"]
        )
        needed = list(weights.weights)
        maps = {}
        covered_sets = []
        for m in needed:
            _, by_id = _coverage(dataset, embeddings, m)
            maps[m] = by_id
            covered_sets.append(set(by_id))
        complete = set.intersection(*covered_sets) if covered_sets else set()
        covered = [i for i, rec in enumerate(dataset.records) if rec.mol_id in complete]
        dropped = len(dataset) - len(covered)
        if dropped:
            log.info("early fusion dropped %d molecules with incomplete modalities", dropped)
    elif modality == "nmr_peak" or modality in GRAPH_MODALITIES:
        covered, by_id = _coverage(dataset, embeddings, modality)
        dropped = len(dataset) - len(covered)
    else:
        raise ValueError(f"unknown modality {modality!r}")
    if not covered:
        raise ValueError(f"no molecules carry modality {modality!r}")

    graphs = graphs if graphs is not None else [featurize(m) for m in dataset.molecules()]
    store = init_encoder_params(cfg.encoder, init_rng)
    adam = Adam(store, lr=cfg.learning_rate)
    history: list[float] = []

    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(covered))
        epoch_losses: list[float] = []
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = [covered[k] for k in order[start : start + cfg.batch_size]]
            if len(batch_idx) < 2:
                warnings.warn("skipping a one-molecule batch (pairwise similarity undefined)",
                              stacklevel=2)
                continue
            batch = pack_graphs([graphs[i] for i in batch_idx])
            records = [dataset.records[i] for i in batch_idx]

            if cfg.loss != "alignment":
                loss_val, grads = _contrastive_step(batch, store, cfg, aug_rng)
            elif modality == "nmr_peak":
                batch_embs = [by_id[r.mol_id] for r in records]
                chunks = atom_target_matrices(batch_embs,
                                              include_self_pairs=cfg.include_self_pairs,
                                              tau1=cfg.tau1, tau2=cfg.tau2)
                row_of = {}
                offset = 0
                for rec, g in zip(records, (graphs[i] for i in batch_idx)):
                    for atom_idx in range(g.num_atoms):
                        row_of[(rec.mol_id, atom_idx)] = offset + atom_idx
                    offset += g.num_atoms
                loss_val, grads = _alignment_step_atoms(batch, chunks, row_of, store, cfg)
            elif modality == EARLY:
                per_mod = {
                    m: _graph_target([maps[m][r.mol_id] for r in records], cfg)
                    for m in weights.weights
                }
                fused = early_fuse_targets(per_mod, weights)
                loss_val, grads = _alignment_step_graph(batch, fused, store, cfg)
            else:
                target = _graph_target([by_id[r.mol_id] for r in records], cfg)
                loss_val, grads = _alignment_step_graph(batch, target, store, cfg)

            adam.step(grads)
            epoch_losses.append(loss_val)
        history.append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
    return PretrainResult(modality, store, history, len(covered), dropped)


def pretrain(dataset: Dataset, embeddings: dict[str, list[ModalityEmbedding]],
             cfg: PretrainConfig, out_dir=None,
             include_early: bool = False) -> dict[str, PretrainResult]:
    """Train a replica per configured modality (plus optionally the
    early-fused one) and persist checkpoints when ``out_dir`` is given."""
    names = list(cfg.modalities) + ([EARLY] if include_early else [])
    seed_seqs = np.random.SeedSequence(cfg.seed).spawn(len(names))
    graphs = [featurize(m) for m in dataset.molecules()]
    results: dict[str, PretrainResult] = {}
    for name, seq in zip(names, seed_seqs):
        result = pretrain_modality(dataset, name, embeddings, cfg, seq, graphs=graphs)
        results[name] = result
        if out_dir is not None:
            from pathlib import Path

            base = Path(out_dir) / name
            base.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(base, result.store.arrays, metadata={
                "modality": name,
                "encoder": cfg.encoder.to_dict(),
                "loss_history": result.loss_history,
                "covered": result.covered,
                "dropped": result.dropped,
                "seed": cfg.seed,
            })
    return results
